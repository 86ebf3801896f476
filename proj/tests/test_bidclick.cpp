#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "proxrl/bidclick.hpp"
#include "proxrl/errors.hpp"

using namespace proxrl;

TEST_CASE("click probability spot values") {
  CHECK(click_prob({0.0, 0.3}, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(click_prob({1.0, 0.3}, 1.0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.5))).epsilon(1e-15));
  CHECK(click_prob({1.0, 0.3}, 1.0) == doctest::Approx(0.924141819978757).epsilon(1e-12));
  CHECK(click_prob({0.5, 0.2}, 0.25) == doctest::Approx(1.0 / (1.0 + std::exp(-0.75))).epsilon(1e-15));
}

TEST_CASE("click probability is strictly increasing in bid and query") {
  for (double x : {0.0, 0.3, 0.7, 1.0}) {
    for (int a = 0; a + 1 < kNumBids; ++a)
      CHECK(click_prob({x, 0.3}, kBidFractions[a]) < click_prob({x, 0.3}, kBidFractions[a + 1]));
  }
  for (double bid : {0.0, 0.5, 1.0})
    CHECK(click_prob({0.2, 0.3}, bid) < click_prob({0.9, 0.3}, bid));
}

TEST_CASE("rewards live on the two-point support") {
  Rng rng(3, 0);
  const AuctionState s{0.4, 0.35};
  for (int a = 0; a < kNumBids; ++a) {
    const double pay = s.c * kBidFractions[a];
    for (int trial = 0; trial < 200; ++trial) {
      auto [r, next] = env_step(s, a, rng);
      CHECK((r == doctest::Approx(-pay).epsilon(1e-15) ||
             r == doctest::Approx(1.0 - pay).epsilon(1e-15)));
      next.validate();
    }
  }
}

TEST_CASE("zero bid pays nothing") {
  Rng rng(5, 0);
  const AuctionState s{0.8, 0.4};
  for (int trial = 0; trial < 100; ++trial) {
    auto [r, next] = env_step(s, 0, rng);
    CHECK((r == 0.0 || r == 1.0));
  }
}

TEST_CASE("Monte Carlo reward mean matches the closed form") {
  Rng rng(7, 0);
  const AuctionState s{0.25, 0.3};
  const int a = 2;
  const int n = 1000000;
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += env_step(s, a, rng).first;
  const double mean = total / n;
  const double p = click_prob(s, kBidFractions[a]);
  const double expect = p - s.c * kBidFractions[a];
  const double se = std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(mean - expect) <= 3 * se);
}

TEST_CASE("bid snapping clips and rounds ties up") {
  CHECK(snap_bid_index(0.4) == 2);     // nearest grid point is 0.5
  CHECK(snap_bid_index(-1.3) == 0);    // clipped to 0
  CHECK(snap_bid_index(2.0) == 4);     // clipped to 1
  CHECK(snap_bid_index(0.125) == 1);   // tie rounds up
  CHECK(snap_bid_index(0.375) == 2);
  CHECK(snap_bid_index(0.625) == 3);
  CHECK(snap_bid_index(0.875) == 4);
  CHECK(snap_bid_index(0.12) == 0);
  CHECK(snap_bid_index(1.0) == 4);
}

TEST_CASE("behavior marginal matches the analytic snap-cell masses") {
  const Eigen::VectorXd probs = behavior_action_probs();
  CHECK(probs.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(probs[0] == doctest::Approx(0.245885).epsilon(1e-4));

  Rng rng(11, 0);
  const int n = 1000000;
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(kNumBids);
  for (int i = 0; i < n; ++i) counts[behavior_action(rng)] += 1.0;
  for (int a = 0; a < kNumBids; ++a) {
    const double p = probs[a];
    const double se = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(counts[a] / n - p) <= 3 * se);
  }
}

TEST_CASE("dataset generation is reproducible and is statistically sane") {
  const Dataset a = generate_dataset(20000, 99);
  const Dataset b = generate_dataset(20000, 99);
  REQUIRE(a.size() == b.size());
  for (std::int64_t i = 0; i < a.size(); ++i) {
    CHECK(a.transitions[i].s.x == b.transitions[i].s.x);
    CHECK(a.transitions[i].r == b.transitions[i].r);
    CHECK(a.transitions[i].a == b.transitions[i].a);
  }

  double mx = 0.0, mc = 0.0;
  for (const Transition& t : a.transitions) {
    mx += t.s.x;
    mc += t.s.c;
  }
  mx /= a.size();
  mc /= a.size();
  CHECK(std::abs(mx - 0.5) <= 3.0 * std::sqrt(1.0 / 12.0) / std::sqrt(double(a.size())));
  CHECK(std::abs(mc - 0.3) <= 3.0 * 0.2 * std::sqrt(1.0 / 12.0) / std::sqrt(double(a.size())));

  const Dataset c = generate_dataset(1000, 100);
  CHECK(c.transitions[0].s.x != a.transitions[0].s.x);
}

TEST_CASE("dataset files round-trip exactly and hash deterministically") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "proxrl_ds_test";
  fs::create_directories(dir);
  const std::string p1 = (dir / "a.jsonl").string();
  const std::string p2 = (dir / "b.jsonl").string();

  const Dataset data = generate_dataset(500, 2024);
  save_dataset_jsonl(data, p1);
  save_dataset_jsonl(data, p2);
  CHECK(fnv1a_file_hash(p1) == fnv1a_file_hash(p2));

  const Dataset back = load_dataset_jsonl(p1);
  REQUIRE(back.size() == data.size());
  CHECK(back.seed == data.seed);
  CHECK(back.generator_version == data.generator_version);
  for (std::int64_t i = 0; i < data.size(); ++i) {
    CHECK(back.transitions[i].s.x == data.transitions[i].s.x);
    CHECK(back.transitions[i].s.c == data.transitions[i].s.c);
    CHECK(back.transitions[i].a == data.transitions[i].a);
    CHECK(back.transitions[i].r == data.transitions[i].r);
    CHECK(back.transitions[i].s_next.x == data.transitions[i].s_next.x);
    CHECK(back.transitions[i].s_next.c == data.transitions[i].s_next.c);
  }
  fs::remove_all(dir);
}

TEST_CASE("one-step optimal value spot checks") {
  // at x=0, c=0.4 the best bid is 0.5
  const AuctionState s1{0.0, 0.4};
  const double sigma1 = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(optimal_value(s1) == doctest::Approx(sigma1 - 0.2).epsilon(1e-12));
  Eigen::Index best1;
  expected_reward_row(s1).maxCoeff(&best1);
  CHECK(best1 == 2);

  // at x=0, c=0.2 the full bid wins
  const AuctionState s2{0.0, 0.2};
  const double sigma2 = 1.0 / (1.0 + std::exp(-2.0));
  CHECK(optimal_value(s2) == doctest::Approx(sigma2 - 0.2).epsilon(1e-12));
  Eigen::Index best2;
  expected_reward_row(s2).maxCoeff(&best2);
  CHECK(best2 == 4);
}

TEST_CASE("zero bid lower-bounds the optimal value at one half") {
  Rng rng(13, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const AuctionState s = sample_state(rng);
    CHECK(optimal_value(s) >= 0.5);
  }
}

TEST_CASE("discrete optimum is near the continuous-bid optimum") {
  Rng rng(17, 0);
  // the expected reward has slope at most ~0.9 in the bid, so a grid with
  // spacing 0.25 can trail the continuous optimum by a bounded amount
  for (int trial = 0; trial < 200; ++trial) {
    const AuctionState s = sample_state(rng);
    double cont = -1e9;
    for (int k = 0; k < 10000; ++k) {
      const double bid = k / 9999.0;
      cont = std::max(cont, click_prob(s, bid) - s.c * bid);
    }
    const double disc = optimal_value(s);
    CHECK(disc <= cont + 1e-12);
    CHECK(cont - disc <= 0.08);
  }
}

TEST_CASE("ordering error counting") {
  const auto grid = evaluation_grid(10, 10);
  REQUIRE(grid.size() == 100);

  const StateQFn monotone = [](const AuctionState&) {
    Eigen::VectorXd q(5);
    q << 0, 1, 2, 3, 4;
    return q;
  };
  CHECK(count_monotonicity_errors(monotone, grid, 1e-6) == 0);

  const StateQFn constant = [](const AuctionState&) { return Eigen::VectorXd::Zero(5).eval(); };
  CHECK(count_monotonicity_errors(constant, grid, 1e-6) == 0);

  const StateQFn one_inversion = [](const AuctionState&) {
    Eigen::VectorXd q(5);
    q << 0, 1, 0.5, 3, 4;  // exactly one bad adjacent pair
    return q;
  };
  CHECK(count_monotonicity_errors(one_inversion, grid, 1e-6) == 100);
}

TEST_CASE("the analytic action values are not monotone at high costs") {
  // the payment term beats the flattening click curve at large bids, so the
  // true rows carry genuine inversions on part of the state space
  const auto grid = evaluation_grid(50, 20);
  REQUIRE(grid.size() == 1000);
  const long errors = count_monotonicity_errors(
      [](const AuctionState& s) { return expected_reward_row(s); }, grid, 1e-6);
  CHECK(errors > 0);

  // spot case: x=0, c=0.4 peaks at bid 0.5 and decreases afterwards
  const Eigen::VectorXd row = expected_reward_row({0.0, 0.4});
  CHECK(row[2] > row[3]);
  CHECK(row[3] > row[4]);
}

TEST_CASE("evaluation grid covers the box with the advertised shape") {
  const auto grid = evaluation_grid(50, 20);
  CHECK(grid.size() == 1000);
  CHECK(grid.front().x == 0.0);
  CHECK(grid.front().c == 0.2);
  CHECK(grid.back().x == 1.0);
  CHECK(grid.back().c == 0.4);
  for (const AuctionState& s : grid) s.validate();
}

TEST_CASE("the exact dynamic-programming model matches the environment") {
  const DiscreteMdp m = make_auction_mdp(21, 11, 0.9);
  CHECK(m.n_states == 231);
  CHECK(m.n_actions == kNumBids);
  m.validate();

  const auto states = auction_mdp_states(21, 11);
  // under fresh-state transitions the fixed point is the one-step value plus
  // a shared constant gamma * mean(v)
  ConstraintSpec spec;
  spec.kind = ConstraintKind::MonotoneCone;
  const FixedPointResult fp = solve_fixed_point(m, spec, 0.0, 1e-12);
  const double shift = 0.9 * fp.values.mean();
  for (int s = 0; s < m.n_states; ++s)
    CHECK(fp.values[s] == doctest::Approx(optimal_value(states[s]) + shift).epsilon(1e-9));
}

TEST_CASE("state validation") {
  const AuctionState bad_x{-0.1, 0.3};
  const AuctionState bad_c{0.5, 0.5};
  const AuctionState ok{0.5, 0.3};
  CHECK_THROWS_AS(bad_x.validate(), DomainError);
  CHECK_THROWS_AS(bad_c.validate(), DomainError);
  CHECK_THROWS_AS(click_prob(ok, 1.5), DomainError);
  CHECK_THROWS_AS(generate_dataset(0, 1), DomainError);
}
