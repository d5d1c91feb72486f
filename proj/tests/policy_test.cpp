#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include "dcpo/policy.hpp"

using namespace dcpo;

namespace {

Policy small_policy() {
  Vocab v{4, 3};
  std::vector<int> qs{0, 1};
  Policy p = Policy::tabular(v, qs, 3);
  p.randomize(11, 0.8);
  return p;
}

}  // namespace

TEST_CASE("tabular context enumeration counts") {
  // Per query: empty prefix + 3 length-1 + 9 length-2 non-eos prefixes.
  Policy p = Policy::tabular(Vocab{4, 3}, std::vector<int>{0, 1}, 3);
  CHECK(p.rows() == 2 * (1 + 3 + 9));
  CHECK(p.param_count() == p.rows() * 4);
}

TEST_CASE("token distributions are normalized at any temperature") {
  Policy p = small_policy();
  for (double T : {0.5, 0.8, 1.0, 1.2, 2.0}) {
    for (int q : p.queries()) {
      Context ctx{q, {1, 2}};
      TokenDistribution d = p.token_probs(ctx, T);
      REQUIRE(d.probs.size() == 4);
      double sum = 0.0;
      for (double pr : d.probs) {
        CHECK(pr >= 0.0);
        sum += pr;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("log_prob matches the materialized distribution") {
  Policy p = small_policy();
  Context ctx{0, {2}};
  TokenDistribution d = p.token_probs(ctx, 1.3);
  for (int a = 0; a < 4; ++a)
    CHECK(std::exp(p.log_prob(ctx, a, 1.3)) ==
          doctest::Approx(d.probs[a]).epsilon(1e-12));
}

TEST_CASE("temperature above one raises per-context entropy") {
  Policy p = small_policy();
  Context ctx{1, {0, 1}};
  double h_sharp = p.token_entropy(ctx, 0.7);
  double h_base = p.token_entropy(ctx, 1.0);
  double h_flat = p.token_entropy(ctx, 1.5);
  CHECK(h_sharp < h_base);
  CHECK(h_base < h_flat);
}

TEST_CASE("score function identity: expected grad log prob vanishes") {
  Policy p = small_policy();
  Context ctx{0, {1}};
  for (double T : {1.0, 1.4}) {
    std::vector<double> acc(p.param_count(), 0.0);
    TokenDistribution d = p.token_probs(ctx, T);
    for (int a = 0; a < 4; ++a)
      p.add_grad_log_prob(ctx, a, T, d.probs[a], acc);
    for (double g : acc) CHECK(g == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("entropy gradient matches finite differences") {
  Policy p = small_policy();
  Context ctx{1, {2, 0}};
  const double T = 1.2;
  std::vector<double> grad(p.param_count(), 0.0);
  p.add_grad_token_entropy(ctx, T, 1.0, grad);
  const double step = 1e-6;
  for (int j : {p.row_of(ctx) * 4 + 0, p.row_of(ctx) * 4 + 3}) {
    Policy hi = p, lo = p;
    hi.values()[j] += step;
    lo.values()[j] -= step;
    double fd = (hi.token_entropy(ctx, T) - lo.token_entropy(ctx, T)) / (2 * step);
    CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("randomize is deterministic in the seed") {
  Policy a = Policy::tabular(Vocab{4, 3}, std::vector<int>{0}, 2);
  Policy b = Policy::tabular(Vocab{4, 3}, std::vector<int>{0}, 2);
  a.randomize(99, 0.5);
  b.randomize(99, 0.5);
  CHECK(a.values() == b.values());
  b.randomize(100, 0.5);
  CHECK(a.values() != b.values());
}

TEST_CASE("set and add logit target one entry") {
  Policy p = Policy::tabular(Vocab{4, 3}, std::vector<int>{0}, 2);
  Context ctx{0, {}};
  p.set_logit(ctx, 2, 1.5);
  CHECK(p.values()[p.row_of(ctx) * 4 + 2] == 1.5);
  p.add_logit(ctx, 2, 0.25);
  CHECK(p.values()[p.row_of(ctx) * 4 + 2] == 1.75);
}

TEST_CASE("unknown contexts throw") {
  Policy p = Policy::tabular(Vocab{4, 3}, std::vector<int>{0}, 2);
  CHECK_THROWS(p.row_of(Context{7, {}}));
  CHECK_THROWS(p.token_probs(Context{0, {0, 1, 2, 0}}, 1.0));
}

TEST_CASE("snapshot round-trip is bit-faithful") {
  Policy p = small_policy();
  std::stringstream buf;
  p.save(buf);
  Policy q = Policy::load(buf);
  CHECK(q.kind() == p.kind());
  CHECK(q.horizon() == p.horizon());
  CHECK(q.values() == p.values());

  Policy lin = Policy::linear_features(Vocab{5, 4}, std::vector<int>{0, 1}, 3, 2);
  lin.randomize(3, 1.1);
  std::stringstream buf2;
  lin.save(buf2);
  Policy lin2 = Policy::load(buf2);
  CHECK(lin2.kind() == ParamKind::LinearFeatures);
  CHECK(lin2.values() == lin.values());
}

TEST_CASE("linear feature layout: bias + query one-hot + prefix slots") {
  Policy lin = Policy::linear_features(Vocab{5, 4}, std::vector<int>{0, 1}, 3, 2);
  CHECK(lin.rows() == 1 + 2 + 2 * (5 + 1));
  CHECK(lin.param_count() == lin.rows() * 5);
}

TEST_CASE("last-k keying shares rows across distant prefixes") {
  Policy p = Policy::tabular(Vocab{4, 3}, std::vector<int>{0}, 4,
                             ContextKeying::LastK, 1);
  CHECK(p.row_of(Context{0, {0, 2}}) == p.row_of(Context{0, {1, 2}}));
  CHECK(p.row_of(Context{0, {0, 2}}) != p.row_of(Context{0, {0, 1}}));
}
