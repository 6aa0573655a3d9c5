#include <algorithm>
#include <cmath>

#include "saratoga/netsim.hpp"

namespace saratoga::netsim {

bool config_valid(const SimLinkConfig& cfg) {
  return std::isfinite(cfg.rate_bps) && cfg.rate_bps > 0 && std::isfinite(cfg.one_way_delay) &&
         cfg.one_way_delay >= 0 && cfg.loss_prob >= 0 && cfg.loss_prob <= 1 && cfg.queue_len >= 1;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + (stream + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SimLink::SimLink(SimLinkConfig cfg) : cfg_(cfg), rng_(cfg.seed) {}

double SimLink::serialization_time(std::size_t packet_bytes) const {
  return static_cast<double>(packet_bytes + cfg_.overhead_bytes) * 8.0 / cfg_.rate_bps;
}

std::size_t SimLink::occupancy(double now) {
  while (!departures_.empty() && departures_.front() <= now) departures_.pop_front();
  return departures_.size();
}

LinkResult SimLink::send(std::size_t packet_bytes, double now) {
  ++counters_.offered;
  LinkResult r;
  if (occupancy(now) >= cfg_.queue_len) {
    ++counters_.tail_drops;
    r.outcome = LinkOutcome::TailDrop;
    return r;
  }
  const double start = std::max(now, busy_until_);
  busy_until_ = start + serialization_time(packet_bytes);
  departures_.push_back(busy_until_);
  counters_.max_occupancy = std::max(counters_.max_occupancy, departures_.size());
  r.departure = busy_until_;
  if (rng_.bernoulli(cfg_.loss_prob)) {
    ++counters_.random_losses;
    r.outcome = LinkOutcome::RandomLoss;
    return r;
  }
  ++counters_.delivered;
  r.arrival = r.departure + cfg_.one_way_delay;
  return r;
}

}  // namespace saratoga::netsim
