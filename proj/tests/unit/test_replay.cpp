#include <doctest.h>

#include <cmath>
#include <map>

#include "helpers.hpp"
#include "knobtuner/replay.hpp"

using namespace knobtuner;

namespace {

Experience transition(double reward = 0.0) {
  Experience e;
  e.state = {0.1, 0.2};
  e.action = {0.0};
  e.reward = reward;
  e.next_state = {0.2, 0.3};
  return e;
}

Experience demonstration(std::uint64_t hint_id, double reward = 0.1) {
  Experience e = transition(reward);
  e.hint_id = hint_id;
  e.window = NStepWindow{{reward}, e.next_state};
  return e;
}

BufferConfig small_config() {
  BufferConfig cfg;
  cfg.capacity = 4;
  cfg.alpha = 1.0;
  cfg.epsilon = 1e-3;
  cfg.lambda1 = 0.05;
  cfg.lambda2 = 1.0;
  return cfg;
}

}  // namespace

TEST_CASE("priority combines TD error, actor gradient, floor and hint term") {
  BufferConfig cfg;
  cfg.lambda1 = 0.05;
  cfg.lambda2 = 1.0;
  cfg.epsilon = 0.001;
  CHECK(priority(0.1, 0.2, 0.5, cfg) == doctest::Approx(0.521));
  CHECK(priority(0.1, 0.2, std::nullopt, cfg) == doctest::Approx(0.021));
  CHECK(priority(0.0, 0.0, std::nullopt, cfg) == doctest::Approx(cfg.epsilon));
}

TEST_CASE("sampling probabilities follow p^alpha normalization") {
  // priorities [2,1,1], alpha=1 -> P = [0.5, 0.25, 0.25]
  BufferConfig cfg = small_config();
  ReplayBuffer buffer(cfg);
  std::vector<std::uint64_t> ids;
  for (int i = 0; i < 3; ++i) ids.push_back(buffer.push_transition(transition()));
  std::map<std::uint64_t, double> no_hints;
  // delta^2 terms: 2-eps, 1-eps, 1-eps so stored priorities land exactly
  auto set_priority = [&](std::uint64_t id, double p) {
    buffer.update_priorities(std::vector<std::uint64_t>{id},
                             std::vector<double>{std::sqrt(p - cfg.epsilon)},
                             std::vector<double>{0.0}, no_hints);
  };
  set_priority(ids[0], 2.0);
  set_priority(ids[1], 1.0);
  set_priority(ids[2], 1.0);

  Rng rng(5);
  std::map<std::uint64_t, int> counts;
  const int draws = 100000;
  double prob_sum = 0.0;
  auto first = buffer.sample(3, rng);
  // exact normalization of the probabilities reported by sample()
  std::map<std::uint64_t, double> probs;
  for (const auto& s : first) probs[s.id] = s.probability;
  for (int i = 0; i < draws; ++i) {
    auto batch = buffer.sample(1, rng);
    ++counts[batch[0].id];
    probs[batch[0].id] = batch[0].probability;
  }
  prob_sum = probs[ids[0]] + probs[ids[1]] + probs[ids[2]];
  CHECK(prob_sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(probs[ids[0]] == doctest::Approx(0.5));
  CHECK(std::abs(counts[ids[0]] / double(draws) - 0.5) < 0.01);
  CHECK(std::abs(counts[ids[1]] / double(draws) - 0.25) < 0.01);

  // priorities [4,1], alpha=0.5 -> P = [2/3, 1/3]
  BufferConfig cfg2 = small_config();
  cfg2.alpha = 0.5;
  ReplayBuffer b2(cfg2);
  auto id0 = b2.push_transition(transition());
  auto id1 = b2.push_transition(transition());
  b2.update_priorities(std::vector<std::uint64_t>{id0},
                       std::vector<double>{std::sqrt(4.0 - cfg2.epsilon)},
                       std::vector<double>{0.0}, no_hints);
  b2.update_priorities(std::vector<std::uint64_t>{id1},
                       std::vector<double>{std::sqrt(1.0 - cfg2.epsilon)},
                       std::vector<double>{0.0}, no_hints);
  auto s = b2.sample(2, rng);
  std::map<std::uint64_t, double> p2;
  for (int i = 0; i < 2000; ++i) {
    for (const auto& smp : b2.sample(2, rng)) p2[smp.id] = smp.probability;
  }
  CHECK(p2[id0] == doctest::Approx(2.0 / 3.0));
  CHECK(p2[id1] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("single element buffers always return it; empty buffers error") {
  ReplayBuffer buffer(small_config());
  Rng rng(1);
  CHECK_THROWS_AS(buffer.sample(1, rng), std::logic_error);
  auto id = buffer.push_transition(transition());
  for (int i = 0; i < 20; ++i) CHECK(buffer.sample(1, rng)[0].id == id);
}

TEST_CASE("alpha = 0 samples uniformly") {
  BufferConfig cfg = small_config();
  cfg.alpha = 0.0;
  cfg.capacity = 8;
  ReplayBuffer buffer(cfg);
  std::map<std::uint64_t, double> no_hints;
  std::vector<std::uint64_t> ids;
  for (int i = 0; i < 8; ++i) ids.push_back(buffer.push_transition(transition()));
  buffer.update_priorities(std::vector<std::uint64_t>{ids[3]},
                           std::vector<double>{5.0}, std::vector<double>{0.0},
                           no_hints);
  Rng rng(3);
  auto batch = buffer.sample(4, rng);
  for (const auto& s : batch) CHECK(s.probability == doctest::Approx(1.0 / 8.0));
}

TEST_CASE("transitions evict FIFO; demonstrations never count or evict") {
  BufferConfig cfg = small_config();
  cfg.capacity = 2;
  ReplayBuffer buffer(cfg);

  auto d = [&](int i) { return buffer.push_demonstration(demonstration(i)); };
  std::vector<std::uint64_t> demo_ids = {d(0), d(1), d(2), d(3), d(4)};

  auto t0 = buffer.push_transition(transition());
  auto t1 = buffer.push_transition(transition());
  auto t2 = buffer.push_transition(transition());  // evicts t0

  CHECK(buffer.transition_count() == 2);
  CHECK(buffer.demonstration_count() == 5);
  CHECK(buffer.find(t0) == nullptr);
  CHECK(buffer.find(t1) != nullptr);
  CHECK(buffer.find(t2) != nullptr);
  for (auto id : demo_ids) CHECK(buffer.find(id) != nullptr);

  // all demonstrations remain sampleable
  Rng rng(9);
  std::map<std::uint64_t, int> seen;
  for (int i = 0; i < 5000; ++i) {
    for (const auto& s : buffer.sample(4, rng)) ++seen[s.id];
  }
  for (auto id : demo_ids) CHECK(seen[id] > 0);
}

TEST_CASE("push_demonstration requires a hint link") {
  ReplayBuffer buffer(small_config());
  CHECK_THROWS_AS(buffer.push_demonstration(transition()), std::invalid_argument);
}

TEST_CASE("first record enters at epsilon, later ones at the running max") {
  BufferConfig cfg = small_config();
  ReplayBuffer buffer(cfg);
  auto id0 = buffer.push_transition(transition());
  CHECK(buffer.find(id0)->stored_priority == doctest::Approx(cfg.epsilon));

  std::map<std::uint64_t, double> no_hints;
  buffer.update_priorities(std::vector<std::uint64_t>{id0},
                           std::vector<double>{2.0}, std::vector<double>{0.0},
                           no_hints);
  auto id1 = buffer.push_transition(transition());
  CHECK(buffer.find(id1)->stored_priority ==
        doctest::Approx(buffer.find(id0)->stored_priority));
}

TEST_CASE("update_priorities rereads linked hint priorities") {
  BufferConfig cfg = small_config();
  ReplayBuffer buffer(cfg);
  auto demo_id = buffer.push_demonstration(demonstration(7));

  std::map<std::uint64_t, double> high{{7, 0.5}};
  buffer.update_priorities(std::vector<std::uint64_t>{demo_id},
                           std::vector<double>{0.0}, std::vector<double>{0.0},
                           high);
  double p_high = buffer.find(demo_id)->stored_priority;
  CHECK(p_high == doctest::Approx(cfg.epsilon + cfg.lambda2 * 0.5));

  std::map<std::uint64_t, double> low{{7, 0.1}};
  buffer.update_priorities(std::vector<std::uint64_t>{demo_id},
                           std::vector<double>{0.0}, std::vector<double>{0.0},
                           low);
  double p_low = buffer.find(demo_id)->stored_priority;
  CHECK(p_high - p_low == doctest::Approx(cfg.lambda2 * 0.4));

  // a TD error moving 0 -> 1 raises the priority by exactly 1
  std::map<std::uint64_t, double> same{{7, 0.1}};
  buffer.update_priorities(std::vector<std::uint64_t>{demo_id},
                           std::vector<double>{1.0}, std::vector<double>{0.0},
                           same);
  CHECK(buffer.find(demo_id)->stored_priority - p_low == doctest::Approx(1.0));

  // updates to evicted ids are silently skipped
  BufferConfig tiny = small_config();
  tiny.capacity = 1;
  ReplayBuffer b2(tiny);
  auto old_id = b2.push_transition(transition());
  b2.push_transition(transition());  // evicts old_id
  std::map<std::uint64_t, double> none;
  CHECK_NOTHROW(b2.update_priorities(std::vector<std::uint64_t>{old_id},
                                     std::vector<double>{1.0},
                                     std::vector<double>{1.0}, none));
}

TEST_CASE("nstep_return expands the discounted window") {
  CHECK(nstep_return(std::vector<double>{1.0}, 0.9, 10.0) == doctest::Approx(10.0));
  CHECK(nstep_return(std::vector<double>{1.0, 2.0}, 0.9, 10.0) ==
        doctest::Approx(1.0 + 1.8 + 8.1));
  CHECK(nstep_return(std::vector<double>{3.0, 2.0, 7.0}, 0.0, 99.0) ==
        doctest::Approx(3.0));
  CHECK_THROWS_AS(nstep_return(std::vector<double>{}, 0.9, 1.0),
                  std::invalid_argument);
}

TEST_CASE("demonstration count is invariant under push interleavings") {
  BufferConfig cfg = small_config();
  cfg.capacity = 3;
  ReplayBuffer buffer(cfg);
  Rng rng(17);
  int demos = 0;
  for (int i = 0; i < 200; ++i) {
    if (rng.uniform() < 0.3) {
      buffer.push_demonstration(demonstration(i));
      ++demos;
    } else {
      buffer.push_transition(transition());
    }
    CHECK(buffer.demonstration_count() == static_cast<std::size_t>(demos));
    CHECK(buffer.transition_count() <= 3);
  }
}

TEST_CASE("importance weights are off by default and bounded by 1 when on") {
  BufferConfig cfg = small_config();
  ReplayBuffer buffer(cfg);
  for (int i = 0; i < 4; ++i) buffer.push_transition(transition());
  Rng rng(2);
  for (const auto& s : buffer.sample(4, rng)) CHECK(s.is_weight == 1.0);

  // mild skew (priorities about 2:1:1:1) so batches mix both kinds
  BufferConfig cfg_is = small_config();
  cfg_is.is_weights = true;
  cfg_is.epsilon = 1.0;
  ReplayBuffer b2(cfg_is);
  std::vector<std::uint64_t> ids;
  for (int i = 0; i < 4; ++i) ids.push_back(b2.push_transition(transition()));
  std::map<std::uint64_t, double> no_hints;
  b2.update_priorities(std::vector<std::uint64_t>{ids[0]},
                       std::vector<double>{1.0}, std::vector<double>{0.0},
                       no_hints);
  bool saw_below_one = false;
  for (int i = 0; i < 50; ++i) {
    for (const auto& s : b2.sample(4, rng)) {
      CHECK(s.is_weight <= 1.0 + 1e-12);
      CHECK(s.is_weight > 0.0);
      if (s.is_weight < 1.0) saw_below_one = true;
    }
  }
  CHECK(saw_below_one);
}
