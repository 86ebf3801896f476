#include "proxrl/bidclick.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "proxrl/errors.hpp"

namespace proxrl {

namespace {

constexpr double kBehaviorMean = 0.4;
constexpr double kBehaviorStd = 0.4;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

void AuctionState::validate() const {
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("AuctionState: x out of [0,1]");
  if (!(c >= 0.2 && c <= 0.4)) throw DomainError("AuctionState: c out of [0.2,0.4]");
}

void Dataset::validate() const {
  if (transitions.empty()) throw DomainError("Dataset: empty");
  for (const Transition& t : transitions) {
    t.s.validate();
    t.s_next.validate();
    if (t.a < 0 || t.a >= kNumBids) throw DomainError("Dataset: action index out of range");
    if (!(t.r >= -0.4 - 1e-12 && t.r <= 1.0 + 1e-12)) throw DomainError("Dataset: reward out of range");
  }
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double click_prob(const AuctionState& s, double bid) {
  s.validate();
  if (!(bid >= 0.0 && bid <= 1.0)) throw DomainError("click_prob: bid out of [0,1]");
  return logistic(2.0 * bid + 0.5 * s.x);
}

AuctionState sample_state(Rng& rng) {
  AuctionState s;
  s.x = rng.uniform();
  s.c = 0.2 + 0.2 * rng.uniform();
  return s;
}

std::pair<double, AuctionState> env_step(const AuctionState& s, int action, Rng& rng) {
  if (action < 0 || action >= kNumBids) throw DomainError("env_step: action index out of range");
  const double bid = kBidFractions[action];
  const double p = click_prob(s, bid);
  const double click = rng.bernoulli(p) ? 1.0 : 0.0;
  const double reward = click - s.c * bid;
  return {reward, sample_state(rng)};
}

int snap_bid_index(double g) {
  const double clipped = std::min(1.0, std::max(0.0, g));
  // round-half-up over the quarter grid
  const int idx = static_cast<int>(std::floor(clipped * 4.0 + 0.5));
  return std::min(idx, kNumBids - 1);
}

int behavior_action(Rng& rng) {
  return snap_bid_index(rng.normal(kBehaviorMean, kBehaviorStd));
}

Eigen::VectorXd behavior_action_probs() {
  // Cell boundaries of the snap map, before clipping: [.125, .375, .625, .875].
  Eigen::VectorXd probs(kNumBids);
  const double edges[4] = {0.125, 0.375, 0.625, 0.875};
  auto cdf = [&](double v) { return normal_cdf((v - kBehaviorMean) / kBehaviorStd); };
  probs[0] = cdf(edges[0]);
  for (int i = 1; i < 4; ++i) probs[i] = cdf(edges[i]) - cdf(edges[i - 1]);
  probs[4] = 1.0 - cdf(edges[3]);
  return probs;
}

Dataset generate_dataset(std::int64_t n, std::uint64_t seed) {
  if (n < 1) throw DomainError("generate_dataset: n must be >= 1");
  Dataset data;
  data.seed = seed;
  data.transitions.reserve(static_cast<size_t>(n));
  Rng rng(seed, stream_id("bidclick-dataset"));
  for (std::int64_t i = 0; i < n; ++i) {
    Transition t;
    t.s = sample_state(rng);
    t.a = behavior_action(rng);
    auto [reward, next] = env_step(t.s, t.a, rng);
    t.r = reward;
    t.s_next = next;
    data.transitions.push_back(t);
  }
  return data;
}

void save_dataset_jsonl(const Dataset& data, const std::string& path) {
  data.validate();
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("save_dataset_jsonl: cannot open " + path);
  std::fprintf(f, "{\"n\":%" PRId64 ",\"seed\":%" PRIu64 ",\"generator_version\":\"%s\"}\n",
               data.size(), data.seed, data.generator_version.c_str());
  for (const Transition& t : data.transitions) {
    std::fprintf(f,
                 "{\"x\":%.17g,\"c\":%.17g,\"a\":%d,\"bid\":%.17g,\"r\":%.17g,"
                 "\"x_next\":%.17g,\"c_next\":%.17g}\n",
                 t.s.x, t.s.c, t.a, t.bid(), t.r, t.s_next.x, t.s_next.c);
  }
  if (std::fclose(f) != 0) throw std::runtime_error("save_dataset_jsonl: write failed");
}

Dataset load_dataset_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset_jsonl: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_dataset_jsonl: missing header");
  const nlohmann::json header = nlohmann::json::parse(line);

  Dataset data;
  data.seed = header.at("seed").get<std::uint64_t>();
  data.generator_version = header.at("generator_version").get<std::string>();
  const std::int64_t n = header.at("n").get<std::int64_t>();
  data.transitions.reserve(static_cast<size_t>(n));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json row = nlohmann::json::parse(line);
    Transition t;
    t.s.x = row.at("x").get<double>();
    t.s.c = row.at("c").get<double>();
    t.a = row.at("a").get<int>();
    t.r = row.at("r").get<double>();
    t.s_next.x = row.at("x_next").get<double>();
    t.s_next.c = row.at("c_next").get<double>();
    data.transitions.push_back(t);
  }
  if (data.size() != n)
    throw std::runtime_error("load_dataset_jsonl: header count disagrees with rows");
  data.validate();
  return data;
}

std::uint64_t fnv1a_file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("fnv1a_file_hash: cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (got < static_cast<std::streamsize>(sizeof(buf))) break;
  }
  return h;
}

Eigen::VectorXd expected_reward_row(const AuctionState& s) {
  Eigen::VectorXd row(kNumBids);
  for (int a = 0; a < kNumBids; ++a)
    row[a] = click_prob(s, kBidFractions[a]) - s.c * kBidFractions[a];
  return row;
}

double optimal_value(const AuctionState& s) { return expected_reward_row(s).maxCoeff(); }

long count_monotonicity_errors(const StateQFn& q_fn,
                               const std::vector<AuctionState>& eval_states, double tol) {
  if (!(tol > 0.0)) throw DomainError("count_monotonicity_errors: tol must be > 0");
  long errors = 0;
  for (const AuctionState& s : eval_states) {
    const Eigen::VectorXd q = q_fn(s);
    for (Eigen::Index i = 0; i + 1 < q.size(); ++i)
      if (q[i] > q[i + 1] + tol) ++errors;
  }
  return errors;
}

std::vector<AuctionState> evaluation_grid(int nx, int nc) {
  if (nx < 2 || nc < 2) throw DomainError("evaluation_grid: need at least 2 points per axis");
  std::vector<AuctionState> states;
  states.reserve(static_cast<size_t>(nx) * nc);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nc; ++j) {
      AuctionState s;
      s.x = static_cast<double>(i) / (nx - 1);
      s.c = 0.2 + 0.2 * static_cast<double>(j) / (nc - 1);
      states.push_back(s);
    }
  return states;
}

std::vector<AuctionState> sample_states(int n, std::uint64_t seed) {
  if (n < 1) throw DomainError("sample_states: n must be >= 1");
  Rng rng(seed, stream_id("bidclick-eval-states"));
  std::vector<AuctionState> states;
  states.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) states.push_back(sample_state(rng));
  return states;
}

Eigen::MatrixXd states_to_columns(const std::vector<AuctionState>& states) {
  Eigen::MatrixXd X(2, static_cast<Eigen::Index>(states.size()));
  for (size_t i = 0; i < states.size(); ++i) {
    X(0, static_cast<Eigen::Index>(i)) = states[i].x;
    X(1, static_cast<Eigen::Index>(i)) = states[i].c;
  }
  return X;
}

std::vector<AuctionState> auction_mdp_states(int nx, int nc) {
  if (nx < 2 || nc < 2) throw DomainError("auction_mdp_states: need at least 2 points per axis");
  return evaluation_grid(nx, nc);
}

DiscreteMdp make_auction_mdp(int nx, int nc, double gamma) {
  const std::vector<AuctionState> states = auction_mdp_states(nx, nc);
  const int n = static_cast<int>(states.size());

  DiscreteMdp m;
  m.n_states = n;
  m.n_actions = kNumBids;
  m.gamma = gamma;
  m.reward.resize(n, kNumBids);
  for (int s = 0; s < n; ++s) m.reward.row(s) = expected_reward_row(states[s]).transpose();
  // Fresh auction every round: next state uniform over the grid.
  m.transition = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n) * kNumBids, n, 1.0 / n);
  m.validate();
  return m;
}

}  // namespace proxrl
