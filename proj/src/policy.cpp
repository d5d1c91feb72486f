#include "dcpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dcpo/rng.hpp"

namespace dcpo {
namespace {

void check_vocab(const Vocab& v) {
  if (v.size < 2) throw std::invalid_argument("vocab size must be >= 2");
  if (v.eos < 0 || v.eos >= v.size)
    throw std::invalid_argument("eos id must be < vocab size");
}

double log_sum_exp(std::span<const double> xs) {
  double m = xs[0];
  for (double x : xs) m = std::max(m, x);
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

Policy Policy::tabular(const Vocab& vocab, std::span<const int> queries,
                       int horizon, ContextKeying keying, int last_k) {
  check_vocab(vocab);
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (queries.empty()) throw std::invalid_argument("at least one query required");
  if (keying == ContextKeying::LastK && last_k < 0)
    throw std::invalid_argument("last_k must be >= 0");
  Policy p;
  p.vocab_ = vocab;
  p.kind_ = ParamKind::Tabular;
  p.keying_ = keying;
  p.last_k_ = keying == ContextKeying::LastK ? last_k : 0;
  p.horizon_ = horizon;
  p.queries_.assign(queries.begin(), queries.end());
  p.build_rows();
  return p;
}

Policy Policy::linear_features(const Vocab& vocab, std::span<const int> queries,
                               int horizon, int last_k) {
  check_vocab(vocab);
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (queries.empty()) throw std::invalid_argument("at least one query required");
  if (last_k < 0) throw std::invalid_argument("last_k must be >= 0");
  Policy p;
  p.vocab_ = vocab;
  p.kind_ = ParamKind::LinearFeatures;
  p.keying_ = ContextKeying::LastK;
  p.last_k_ = last_k;
  p.horizon_ = horizon;
  p.queries_.assign(queries.begin(), queries.end());
  // bias + query one-hot + (token-or-empty) one-hot per prefix slot
  p.rows_ = 1 + static_cast<int>(p.queries_.size()) + last_k * (vocab.size + 1);
  p.values_.assign(static_cast<std::size_t>(p.rows_) * vocab.size, 0.0);
  return p;
}

void Policy::build_rows() {
  const int v = vocab_.size;
  rows_ = 0;
  row_index_.clear();
  row_keys_.clear();
  std::vector<int> prefix;
  // Lexicographic DFS over non-eos prefixes per query; dedup handles last-k.
  auto visit = [&](auto&& self, int query) -> void {
    Context ctx{query, prefix};
    std::uint64_t key = context_key(ctx);
    if (row_index_.emplace(key, rows_).second) {
      row_keys_.push_back(key);
      ++rows_;
    }
    if (static_cast<int>(prefix.size()) >= horizon_ - 1) return;
    for (int a = 0; a < v; ++a) {
      if (a == vocab_.eos) continue;
      prefix.push_back(a);
      self(self, query);
      prefix.pop_back();
    }
  };
  for (int q : queries_) visit(visit, q);
  values_.assign(static_cast<std::size_t>(rows_) * v, 0.0);
}

std::uint64_t Policy::context_key(const Context& ctx) const {
  auto it = std::find(queries_.begin(), queries_.end(), ctx.query_id);
  if (it == queries_.end())
    throw std::out_of_range("unknown query_id in context");
  std::uint64_t key = static_cast<std::uint64_t>(it - queries_.begin()) + 1;
  std::size_t n = ctx.prefix.size();
  std::size_t start = 0;
  if (keying_ == ContextKeying::LastK && n > static_cast<std::size_t>(last_k_))
    start = n - static_cast<std::size_t>(last_k_);
  for (std::size_t i = start; i < n; ++i) {
    int t = ctx.prefix[i];
    if (t < 0 || t >= vocab_.size)
      throw std::invalid_argument("prefix token out of range");
    key = key * static_cast<std::uint64_t>(vocab_.size + 1) +
          static_cast<std::uint64_t>(t + 1);
  }
  return key;
}

int Policy::row_of(const Context& ctx) const {
  if (kind_ != ParamKind::Tabular)
    throw std::logic_error("row_of is only defined for tabular policies");
  auto it = row_index_.find(context_key(ctx));
  if (it == row_index_.end())
    throw std::out_of_range("context outside the tabular parameter table");
  return it->second;
}

void Policy::active_features(const Context& ctx, std::vector<int>& out) const {
  out.clear();
  out.push_back(0);  // bias
  auto it = std::find(queries_.begin(), queries_.end(), ctx.query_id);
  if (it == queries_.end())
    throw std::out_of_range("unknown query_id in context");
  out.push_back(1 + static_cast<int>(it - queries_.begin()));
  const int nq = static_cast<int>(queries_.size());
  const int len = static_cast<int>(ctx.prefix.size());
  for (int j = 0; j < last_k_; ++j) {
    int base = 1 + nq + j * (vocab_.size + 1);
    int offset = 0;  // "empty" bucket
    if (j < len) {
      int t = ctx.prefix[len - 1 - j];
      if (t < 0 || t >= vocab_.size)
        throw std::invalid_argument("prefix token out of range");
      offset = t + 1;
    }
    out.push_back(base + offset);
  }
}

void Policy::logits(const Context& ctx, std::span<double> out) const {
  if (static_cast<int>(ctx.prefix.size()) >= horizon_)
    throw std::invalid_argument("context prefix exceeds the policy horizon");
  const int v = vocab_.size;
  if (kind_ == ParamKind::Tabular) {
    int row = row_of(ctx);
    for (int a = 0; a < v; ++a) out[a] = values_[row * v + a];
  } else {
    std::vector<int> feats;
    active_features(ctx, feats);
    for (int a = 0; a < v; ++a) {
      double s = 0.0;
      for (int f : feats) s += values_[static_cast<std::size_t>(f) * v + a];
      out[a] = s;
    }
  }
  for (int a = 0; a < v; ++a)
    if (!std::isfinite(out[a]))
      throw std::runtime_error("non-finite logit encountered");
}

TokenDistribution Policy::token_probs(const Context& ctx, double temperature) const {
  if (!(temperature > 0.0))
    throw std::invalid_argument("temperature must be > 0");
  const int v = vocab_.size;
  std::vector<double> l(v);
  logits(ctx, l);
  for (double& x : l) x /= temperature;
  double lse = log_sum_exp(l);
  TokenDistribution d;
  d.temperature = temperature;
  d.probs.resize(v);
  for (int a = 0; a < v; ++a) d.probs[a] = std::exp(l[a] - lse);
  return d;
}

double Policy::log_prob(const Context& ctx, int token, double temperature) const {
  if (!(temperature > 0.0))
    throw std::invalid_argument("temperature must be > 0");
  if (token < 0 || token >= vocab_.size)
    throw std::invalid_argument("token out of range");
  const int v = vocab_.size;
  std::vector<double> l(v);
  logits(ctx, l);
  for (double& x : l) x /= temperature;
  return l[token] - log_sum_exp(l);
}

double Policy::token_entropy(const Context& ctx, double temperature) const {
  if (!(temperature > 0.0))
    throw std::invalid_argument("temperature must be > 0");
  const int v = vocab_.size;
  std::vector<double> l(v);
  logits(ctx, l);
  for (double& x : l) x /= temperature;
  double lse = log_sum_exp(l);
  double h = 0.0;
  for (int a = 0; a < v; ++a) {
    double lp = l[a] - lse;
    double p = std::exp(lp);
    if (p > 0.0) h -= p * lp;
  }
  return h;
}

std::vector<std::pair<int, double>> Policy::grad_log_prob(
    const Context& ctx, int token, double temperature) const {
  std::vector<double> dense(values_.size(), 0.0);
  add_grad_log_prob(ctx, token, temperature, 1.0, dense);
  std::vector<std::pair<int, double>> sparse;
  for (std::size_t i = 0; i < dense.size(); ++i)
    if (dense[i] != 0.0) sparse.emplace_back(static_cast<int>(i), dense[i]);
  return sparse;
}

void Policy::add_grad_log_prob(const Context& ctx, int token, double temperature,
                               double coeff, std::span<double> grad) const {
  TokenDistribution d = token_probs(ctx, temperature);
  if (token < 0 || token >= vocab_.size)
    throw std::invalid_argument("token out of range");
  const int v = vocab_.size;
  // d log pi^T / d l(ctx, a) = (1[a == token] - pi^T(a)) / T
  if (kind_ == ParamKind::Tabular) {
    int row = row_of(ctx);
    for (int a = 0; a < v; ++a) {
      double g = ((a == token ? 1.0 : 0.0) - d.probs[a]) / temperature;
      grad[row * v + a] += coeff * g;
    }
  } else {
    std::vector<int> feats;
    active_features(ctx, feats);
    for (int a = 0; a < v; ++a) {
      double g = ((a == token ? 1.0 : 0.0) - d.probs[a]) / temperature;
      for (int f : feats) grad[static_cast<std::size_t>(f) * v + a] += coeff * g;
    }
  }
}

void Policy::add_grad_token_entropy(const Context& ctx, double temperature,
                                    double coeff, std::span<double> grad) const {
  const int v = vocab_.size;
  std::vector<double> l(v);
  logits(ctx, l);
  for (double& x : l) x /= temperature;
  double lse = log_sum_exp(l);
  double h = 0.0;
  std::vector<double> lp(v);
  for (int a = 0; a < v; ++a) {
    lp[a] = l[a] - lse;
    double p = std::exp(lp[a]);
    if (p > 0.0) h -= p * lp[a];
  }
  // dH / d l(ctx, b) = -pi^T(b) (log pi^T(b) + H) / T
  auto row_grad = [&](int b) {
    double p = std::exp(lp[b]);
    return p > 0.0 ? -p * (lp[b] + h) / temperature : 0.0;
  };
  if (kind_ == ParamKind::Tabular) {
    int row = row_of(ctx);
    for (int b = 0; b < v; ++b) grad[row * v + b] += coeff * row_grad(b);
  } else {
    std::vector<int> feats;
    active_features(ctx, feats);
    for (int b = 0; b < v; ++b) {
      double g = row_grad(b);
      for (int f : feats) grad[static_cast<std::size_t>(f) * v + b] += coeff * g;
    }
  }
}

void Policy::randomize(std::uint64_t seed, double stddev) {
  SplitMix64 rng(seed);
  // Box-Muller keeps the draws identical across standard libraries.
  for (std::size_t i = 0; i < values_.size(); i += 2) {
    double u1 = rng.uniform();
    double u2 = rng.uniform();
    while (u1 <= 0.0) u1 = rng.uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    values_[i] = stddev * r * std::cos(2.0 * M_PI * u2);
    if (i + 1 < values_.size())
      values_[i + 1] = stddev * r * std::sin(2.0 * M_PI * u2);
  }
}

void Policy::set_logit(const Context& ctx, int token, double value) {
  if (token < 0 || token >= vocab_.size)
    throw std::invalid_argument("token out of range");
  values_[row_of(ctx) * vocab_.size + token] = value;
}

void Policy::add_logit(const Context& ctx, int token, double delta) {
  if (token < 0 || token >= vocab_.size)
    throw std::invalid_argument("token out of range");
  values_[row_of(ctx) * vocab_.size + token] += delta;
}

namespace {

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Decodes a tabular row key back into "query:prefix" text for the snapshot.
std::string key_to_text(std::uint64_t key, const std::vector<int>& queries,
                        int vocab_size) {
  std::vector<int> digits;
  while (key > static_cast<std::uint64_t>(queries.size())) {
    digits.push_back(static_cast<int>(key % (vocab_size + 1)) - 1);
    key /= vocab_size + 1;
  }
  std::reverse(digits.begin(), digits.end());
  std::ostringstream os;
  os << queries[key - 1] << ':';
  if (digits.empty()) {
    os << '-';
  } else {
    for (std::size_t i = 0; i < digits.size(); ++i) {
      if (i) os << '.';
      os << digits[i];
    }
  }
  return os.str();
}

}  // namespace

void Policy::save(std::ostream& out) const {
  out << "dcpo-policy v1 kind="
      << (kind_ == ParamKind::Tabular ? "tabular" : "linear-features")
      << " vocab=" << vocab_.size << " eos=" << vocab_.eos << " keying="
      << (keying_ == ContextKeying::FullPrefix ? "full-prefix" : "last-k")
      << " k=" << last_k_ << " horizon=" << horizon_ << " queries=";
  for (std::size_t i = 0; i < queries_.size(); ++i) {
    if (i) out << ',';
    out << queries_[i];
  }
  out << '\n';
  const int v = vocab_.size;
  if (kind_ == ParamKind::Tabular) {
    for (int r = 0; r < rows_; ++r) {
      std::string key = key_to_text(row_keys_[r], queries_, v);
      for (int a = 0; a < v; ++a)
        out << key << ' ' << a << ' ' << format_value(values_[r * v + a]) << '\n';
    }
  } else {
    for (int f = 0; f < rows_; ++f)
      for (int a = 0; a < v; ++a)
        out << 'f' << f << ' ' << a << ' '
            << format_value(values_[static_cast<std::size_t>(f) * v + a]) << '\n';
  }
}

void Policy::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  save(out);
}

Policy Policy::load(std::istream& in) {
  std::string header;
  if (!std::getline(in, header))
    throw std::runtime_error("empty policy snapshot");
  std::istringstream hs(header);
  std::string magic, version;
  hs >> magic >> version;
  if (magic != "dcpo-policy" || version != "v1")
    throw std::runtime_error("unrecognized policy snapshot header");
  std::string kind_s, keying_s, queries_s;
  Vocab vocab;
  int k = 0, horizon = 0;
  std::string tok;
  while (hs >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("malformed policy snapshot header field: " + tok);
    std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "kind") kind_s = val;
    else if (key == "vocab") vocab.size = std::stoi(val);
    else if (key == "eos") vocab.eos = std::stoi(val);
    else if (key == "keying") keying_s = val;
    else if (key == "k") k = std::stoi(val);
    else if (key == "horizon") horizon = std::stoi(val);
    else if (key == "queries") queries_s = val;
    else throw std::runtime_error("unknown policy snapshot header field: " + key);
  }
  std::vector<int> queries;
  std::istringstream qs(queries_s);
  std::string part;
  while (std::getline(qs, part, ',')) queries.push_back(std::stoi(part));

  Policy p;
  if (kind_s == "tabular") {
    ContextKeying keying = keying_s == "last-k" ? ContextKeying::LastK
                                                : ContextKeying::FullPrefix;
    p = tabular(vocab, queries, horizon, keying, k);
  } else if (kind_s == "linear-features") {
    p = linear_features(vocab, queries, horizon, k);
  } else {
    throw std::runtime_error("unknown policy kind: " + kind_s);
  }

  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    int token;
    double value;
    if (!(ls >> key >> token >> value))
      throw std::runtime_error("malformed policy snapshot line: " + line);
    if (p.kind_ == ParamKind::Tabular) {
      auto colon = key.find(':');
      if (colon == std::string::npos)
        throw std::runtime_error("malformed context key: " + key);
      Context ctx;
      ctx.query_id = std::stoi(key.substr(0, colon));
      std::string pref = key.substr(colon + 1);
      if (pref != "-") {
        std::istringstream ps(pref);
        while (std::getline(ps, part, '.')) ctx.prefix.push_back(std::stoi(part));
      }
      p.values_[p.row_of(ctx) * vocab.size + token] = value;
    } else {
      int f = std::stoi(key.substr(1));
      if (f < 0 || f >= p.rows_)
        throw std::runtime_error("feature index out of range: " + key);
      p.values_[static_cast<std::size_t>(f) * vocab.size + token] = value;
    }
  }
  return p;
}

Policy Policy::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open policy snapshot: " + path);
  return load(in);
}

}  // namespace dcpo
