#include "dcpo/task.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dcpo/config.hpp"

namespace dcpo {

Task::Task(std::string name, Vocab vocab, int horizon, std::vector<int> queries,
           std::vector<std::vector<std::vector<int>>> references,
           std::vector<LogitBias> init_bias)
    : name_(std::move(name)),
      vocab_(vocab),
      horizon_(horizon),
      queries_(std::move(queries)),
      references_(std::move(references)),
      init_bias_(std::move(init_bias)) {
  if (vocab_.size < 2 || vocab_.eos < 0 || vocab_.eos >= vocab_.size)
    throw std::invalid_argument("task '" + name_ + "': invalid vocab");
  if (horizon_ < 1)
    throw std::invalid_argument("task '" + name_ + "': horizon must be >= 1");
  if (queries_.empty() || references_.size() != queries_.size())
    throw std::invalid_argument("task '" + name_ +
                                "': one reference set per query required");
  for (std::size_t qi = 0; qi < references_.size(); ++qi) {
    const auto& refs = references_[qi];
    if (refs.empty())
      throw std::invalid_argument("task '" + name_ +
                                  "': empty reference set for query " +
                                  std::to_string(queries_[qi]));
    for (const auto& ref : refs) {
      if (ref.empty() || static_cast<int>(ref.size()) > horizon_)
        throw std::invalid_argument("task '" + name_ +
                                    "': reference length must be in [1, horizon]");
      if (ref.back() != vocab_.eos)
        throw std::invalid_argument("task '" + name_ +
                                    "': references must end with eos");
      for (std::size_t i = 0; i + 1 < ref.size(); ++i)
        if (ref[i] < 0 || ref[i] >= vocab_.size || ref[i] == vocab_.eos)
          throw std::invalid_argument(
              "task '" + name_ + "': reference tokens before eos must be non-eos");
    }
  }
}

int Task::query_index(int query_id) const {
  auto it = std::find(queries_.begin(), queries_.end(), query_id);
  if (it == queries_.end())
    throw std::out_of_range("task '" + name_ + "': unknown query_id " +
                            std::to_string(query_id));
  return static_cast<int>(it - queries_.begin());
}

const std::vector<std::vector<int>>& Task::references(int query_id) const {
  return references_[query_index(query_id)];
}

RewardOutcome Task::reward(int query_id, std::span<const int> response) const {
  for (int t : response)
    if (t < 0 || t >= vocab_.size)
      throw std::invalid_argument("task '" + name_ + "': response token out of range");
  for (const auto& ref : references_[query_index(query_id)]) {
    if (ref.size() == response.size() &&
        std::equal(ref.begin(), ref.end(), response.begin()))
      return RewardOutcome{1};
  }
  return RewardOutcome{0};
}

Policy Task::make_policy(ContextKeying keying, int last_k) const {
  Policy p = Policy::tabular(vocab_, queries_, horizon_, keying, last_k);
  for (const LogitBias& b : init_bias_)
    p.add_logit(Context{b.query_id, b.prefix}, b.token, b.value);
  return p;
}

Task make_needle(int vocab_size, int horizon, int n_queries) {
  Vocab vocab{vocab_size, vocab_size - 1};
  std::vector<int> queries(n_queries);
  std::vector<std::vector<std::vector<int>>> refs(n_queries);
  for (int q = 0; q < n_queries; ++q) {
    queries[q] = q;
    // One full-length reference per query, offset by the query id.
    std::vector<int> ref;
    for (int t = 0; t + 1 < horizon; ++t)
      ref.push_back((q + t) % (vocab_size - 1));
    ref.push_back(vocab.eos);
    refs[q] = {ref};
  }
  return Task("needle", vocab, horizon, queries, refs);
}

Task make_multipath(int vocab_size, int horizon, int n_queries) {
  if (vocab_size < 4)
    throw std::invalid_argument("multipath needs vocab >= 4");
  Vocab vocab{vocab_size, vocab_size - 1};
  const int branch = vocab_size - 2;  // token vocab_size-2 is never rewarded
  std::vector<int> queries(n_queries);
  std::vector<std::vector<std::vector<int>>> refs(n_queries);
  for (int q = 0; q < n_queries; ++q) {
    queries[q] = q;
    std::vector<std::vector<int>> rs;
    for (int a = 0; a < branch; ++a)
      for (int b = 0; b < branch; ++b) {
        std::vector<int> ref{a, b};
        while (static_cast<int>(ref.size()) + 1 < horizon)
          ref.push_back((a + b) % branch);
        ref.push_back(vocab.eos);
        rs.push_back(std::move(ref));
      }
    refs[q] = std::move(rs);
  }
  return Task("multipath", vocab, horizon, queries, refs);
}

Task make_staircase(int vocab_size, int horizon) {
  Vocab vocab{vocab_size, vocab_size - 1};
  const int rare = vocab_size - 2;  // rewarded prefix starts here
  std::vector<std::vector<int>> rs;
  for (int b = 0; b < 2; ++b) {
    std::vector<int> ref{rare, b};
    while (static_cast<int>(ref.size()) + 1 < horizon) ref.push_back(rare);
    ref.push_back(vocab.eos);
    rs.push_back(std::move(ref));
  }
  // Peak the first-token distribution away from the rewarded prefix.
  std::vector<LogitBias> bias{{0, {}, 0, 3.0}};
  return Task("staircase", vocab, horizon, {0}, {rs}, bias);
}

std::vector<Task> builtin_tasks() {
  return {make_needle(), make_multipath(), make_staircase()};
}

Task find_task(const std::string& name) {
  for (Task& t : builtin_tasks())
    if (t.name() == name) return t;
  throw std::invalid_argument("unknown builtin task: " + name);
}

Task load_task(std::istream& in) {
  KeyValueConfig cfg = KeyValueConfig::parse(in);
  std::string name = cfg.get_string("task.name", "custom");
  Vocab vocab;
  vocab.size = static_cast<int>(cfg.get_int("task.vocab"));
  vocab.eos = static_cast<int>(cfg.get_int("task.eos", vocab.size - 1));
  int horizon = static_cast<int>(cfg.get_int("task.horizon"));

  std::vector<int> queries;
  std::vector<std::vector<std::vector<int>>> refs;
  std::vector<LogitBias> bias;
  for (const std::string& key : cfg.keys_with_prefix("task.query.")) {
    std::istringstream ks(key.substr(std::string("task.query.").size()));
    int q = -1;
    char dot;
    std::string rest;
    if (!(ks >> q >> dot) || dot != '.' || !(ks >> rest) || rest.rfind("ref", 0) != 0)
      throw ConfigError("line " + std::to_string(cfg.line_of(key)) +
                        ": malformed task key '" + key + "'");
    auto it = std::find(queries.begin(), queries.end(), q);
    std::size_t qi;
    if (it == queries.end()) {
      qi = queries.size();
      queries.push_back(q);
      refs.emplace_back();
    } else {
      qi = static_cast<std::size_t>(it - queries.begin());
    }
    refs[qi].push_back(parse_int_list(cfg.get_string(key), key));
  }
  for (const std::string& key : cfg.keys_with_prefix("task.init.")) {
    // task.init.<i> = <query> <token> <logit-delta> [prefix tokens...]
    std::vector<int> unused;
    std::istringstream vs(cfg.get_string(key));
    LogitBias b;
    if (!(vs >> b.query_id >> b.token >> b.value))
      throw ConfigError("line " + std::to_string(cfg.line_of(key)) +
                        ": malformed task init '" + key + "'");
    int t;
    while (vs >> t) b.prefix.push_back(t);
    bias.push_back(std::move(b));
  }
  if (queries.empty())
    throw ConfigError("task config defines no task.query.<q>.ref.<i> entries");
  auto unused = cfg.unused_keys();
  if (!unused.empty())
    throw ConfigError("line " + std::to_string(cfg.line_of(unused.front())) +
                      ": unknown task config key '" + unused.front() + "'");
  return Task(name, vocab, horizon, queries, refs, bias);
}

Task load_task_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open task file: " + path);
  return load_task(in);
}

}  // namespace dcpo
