#pragma once

// Data schedule for progressive SFT. Stage 1 batches the core task alone.
// Stage 2 batches downstream data and replays a fixed share of core samples in
// every batch, which is how the anti-forgetting term enters training: by
// per-batch sample counts, with the per-sample loss left unweighted.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lexforge/corpus.hpp"
#include "lexforge/random.hpp"

namespace lexforge {

class EmptyDataset : public InvalidArgument {
 public:
  explicit EmptyDataset(const std::string& side) : InvalidArgument("empty dataset: " + side), side_(side) {}
  const std::string& side() const noexcept { return side_; }

 private:
  std::string side_;
};

struct CurriculumConfig {
  double mixing_lambda = 0.2;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t epochs = 1;
  // Batch count when the downstream quota is zero (lambda rounds to 1).
  std::optional<std::size_t> num_batches;
};

inline void validate(const CurriculumConfig& cfg) {
  if (!(cfg.mixing_lambda >= 0.0 && cfg.mixing_lambda <= 1.0)) throw InvalidArgument("mixing_lambda must be in [0,1]");
  if (cfg.batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
  if (cfg.epochs == 0) throw InvalidArgument("epochs must be >= 1");
}

// round-half-up(lambda x B), clamped to [0, B]. The epsilon absorbs binary
// representation error so that e.g. 0.15 x 10 rounds to 2.
inline std::size_t core_quota(double lambda, std::size_t batch_size) {
  const double raw = std::floor(lambda * static_cast<double>(batch_size) + 0.5 + 1e-9);
  if (raw <= 0.0) return 0;
  return std::min(batch_size, static_cast<std::size_t>(raw));
}

struct Batch {
  std::vector<std::string> ids;
  bool partial = false;
};

inline std::vector<Batch> stage1_batches(std::span<const std::string> core, std::size_t batch_size,
                                         std::uint64_t seed) {
  if (core.empty()) throw EmptyDataset("core");
  if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
  std::vector<std::string> order(core.begin(), core.end());
  Rng rng(derive_seed(seed, "psft-stage1"));
  rng.shuffle(std::span<std::string>(order));
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    Batch b;
    const std::size_t end = std::min(i + batch_size, order.size());
    b.ids.assign(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
    b.partial = b.ids.size() < batch_size;
    batches.push_back(std::move(b));
  }
  return batches;
}

struct BatchComposition {
  std::vector<std::string> core_ids;
  std::vector<std::string> downstream_ids;
  bool partial = false;
  std::size_t epoch = 0;
};

namespace detail {

// Replacement-free draws from the core set; reshuffles with a fresh derived
// seed every time the pool is exhausted.
class CoreCycler {
 public:
  CoreCycler(std::span<const std::string> core, std::uint64_t seed) : pool_(core.begin(), core.end()), seed_(seed) {
    reshuffle();
  }

  const std::string& next() {
    if (pos_ == pool_.size()) reshuffle();
    return pool_[pos_++];
  }

 private:
  void reshuffle() {
    Rng rng(derive_seed(seed_, "psft-core-cycle", cycle_++));
    rng.shuffle(std::span<std::string>(pool_));
    pos_ = 0;
  }

  std::vector<std::string> pool_;
  std::uint64_t seed_;
  std::uint64_t cycle_ = 0;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Each epoch visits every downstream id exactly once in a seeded order. Full
// batches hold core_quota(lambda, B) core ids and B - quota downstream ids; an
// epoch's leftover downstream ids form a flagged partial batch with the same
// core quota.
inline std::vector<BatchComposition> stage2_batches(std::span<const std::string> core,
                                                    std::span<const std::string> downstream,
                                                    const CurriculumConfig& cfg) {
  validate(cfg);
  const std::size_t quota = core_quota(cfg.mixing_lambda, cfg.batch_size);
  const std::size_t down_per_batch = cfg.batch_size - quota;
  if (quota > 0 && core.empty()) throw EmptyDataset("core");
  if (down_per_batch > 0 && downstream.empty()) throw EmptyDataset("downstream");

  std::vector<BatchComposition> batches;
  std::optional<detail::CoreCycler> cycler;
  if (quota > 0) cycler.emplace(core, derive_seed(cfg.seed, "psft-stage2-core"));

  if (down_per_batch == 0) {
    if (!cfg.num_batches) throw InvalidArgument("num_batches is required when every batch is core-only");
    for (std::size_t b = 0; b < *cfg.num_batches; ++b) {
      BatchComposition bc;
      for (std::size_t k = 0; k < quota; ++k) bc.core_ids.push_back(cycler->next());
      batches.push_back(std::move(bc));
    }
    return batches;
  }

  std::vector<std::string> order(downstream.begin(), downstream.end());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, "psft-stage2-downstream", epoch));
    rng.shuffle(std::span<std::string>(order));
    for (std::size_t i = 0; i < order.size(); i += down_per_batch) {
      BatchComposition bc;
      bc.epoch = epoch;
      const std::size_t end = std::min(i + down_per_batch, order.size());
      bc.downstream_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(i),
                               order.begin() + static_cast<std::ptrdiff_t>(end));
      for (std::size_t k = 0; k < quota; ++k) bc.core_ids.push_back(cycler->next());
      bc.partial = bc.downstream_ids.size() < down_per_batch;
      batches.push_back(std::move(bc));
      if (cfg.num_batches && batches.size() >= *cfg.num_batches) return batches;
    }
  }
  return batches;
}

// Core share over full batches; empty when there are none.
inline std::optional<double> mixing_stats(std::span<const BatchComposition> batches) {
  std::uint64_t core = 0, total = 0;
  for (const auto& b : batches) {
    if (b.partial) continue;
    core += b.core_ids.size();
    total += b.core_ids.size() + b.downstream_ids.size();
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(core) / static_cast<double>(total);
}

inline ordered_json to_json(const Batch& b) {
  ordered_json j;
  j["ids"] = b.ids;
  j["partial"] = b.partial;
  return j;
}

inline ordered_json to_json(const BatchComposition& b) {
  ordered_json j;
  j["epoch"] = b.epoch;
  j["core_ids"] = b.core_ids;
  j["downstream_ids"] = b.downstream_ids;
  j["partial"] = b.partial;
  return j;
}

}  // namespace lexforge
