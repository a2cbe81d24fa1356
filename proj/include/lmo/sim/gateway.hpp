#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lmo/rng.hpp"
#include "lmo/sim/scenario.hpp"
#include "lmo/wire.hpp"

namespace lmo::sim {

// Extra transit delay for one message, or nothing when the network drops
// it. Draw order per message: loss first, then jitter.
inline std::optional<double> impair_draw(const Impairment& imp, Rng& rng) {
  if (imp.loss > 0.0 && rng.uniform() < imp.loss) return std::nullopt;
  double delay = imp.latency_ms;
  if (imp.jitter_ms > 0.0) delay += rng.uniform(0.0, imp.jitter_ms);
  return delay;
}

struct GatewayCounters {
  std::uint64_t published{0};
  std::uint64_t matched{0};  // publish x matching-subscriber pairs
  std::uint64_t delivered{0};
  std::uint64_t dropped_impairment{0};
  std::uint64_t dropped_no_subscriber{0};
};

// Location-boundary pub/sub router. Routing only; the caller owns transit
// (impairment) and bumps delivered / dropped_impairment per routed copy,
// keeping delivered + dropped_impairment == matched.
class Gateway {
 public:
  void subscribe(const std::string& id, const wire::Boundary& boundary) {
    subs_.push_back({id, boundary});
  }

  // Matching subscriber ids in subscription order.
  std::vector<std::string> route(double lat, double lon) {
    ++counters_.published;
    std::vector<std::string> out;
    for (const auto& s : subs_)
      if (s.boundary.contains(lat, lon)) out.push_back(s.id);
    counters_.matched += out.size();
    if (out.empty()) ++counters_.dropped_no_subscriber;
    return out;
  }

  GatewayCounters& counters() { return counters_; }
  const GatewayCounters& counters() const { return counters_; }

 private:
  struct Subscriber {
    std::string id;
    wire::Boundary boundary;
  };
  std::vector<Subscriber> subs_;
  GatewayCounters counters_;
};

}  // namespace lmo::sim
