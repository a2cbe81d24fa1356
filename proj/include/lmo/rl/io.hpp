#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmo/error.hpp"
#include "lmo/rl/histogram.hpp"
#include "lmo/rl/network.hpp"
#include "lmo/rl/trainer.hpp"

namespace lmo::rl {

using nlohmann::json;

inline constexpr int kNetworkSchemaVersion = 1;

inline json to_json(const DuelingNetwork& net) {
  auto layer = [](const detail::Linear& l) {
    return json{{"in", l.in}, {"out", l.out}, {"w", l.w}, {"b", l.b}};
  };
  return json{{"schema_version", kNetworkSchemaVersion},
              {"algorithm", "dueling_dqn"},
              {"shape",
               {{"input", net.shape().input},
                {"hidden", net.shape().hidden},
                {"actions", net.shape().actions}}},
              {"trunk1", layer(net.l1())},
              {"trunk2", layer(net.l2())},
              {"value", layer(net.value())},
              {"advantage", layer(net.advantage())}};
}

inline DuelingNetwork network_from_json(const json& j) {
  if (!j.contains("schema_version") ||
      j.at("schema_version").get<int>() != kNetworkSchemaVersion)
    throw format_error("unsupported network schema version");
  if (j.at("algorithm").get<std::string>() != "dueling_dqn")
    throw format_error("model file is not a dueling_dqn network");

  NetworkShape shape;
  shape.input = j.at("shape").at("input").get<int>();
  shape.hidden = j.at("shape").at("hidden").get<int>();
  shape.actions = j.at("shape").at("actions").get<int>();
  DuelingNetwork net(shape, 0);

  auto load = [&](const char* key, detail::Linear& l) {
    const json& lj = j.at(key);
    l.in = lj.at("in").get<int>();
    l.out = lj.at("out").get<int>();
    l.w = lj.at("w").get<std::vector<double>>();
    l.b = lj.at("b").get<std::vector<double>>();
    if (l.w.size() != std::size_t(l.in) * l.out || l.b.size() != std::size_t(l.out))
      throw format_error(std::string("layer size mismatch in ") + key);
  };
  load("trunk1", net.l1());
  load("trunk2", net.l2());
  load("value", net.value());
  load("advantage", net.advantage());
  return net;
}

inline void save_network(const DuelingNetwork& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << to_json(net).dump(2) << '\n';
}

inline DuelingNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot read " + path);
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw format_error("invalid JSON in " + path);
  return network_from_json(j);
}

inline void write_reward_log_csv(const std::vector<RewardLogEntry>& log,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << "step,episode,variant,reward\n";
  char buf[64];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%.9g", e.reward);
    out << e.step << ',' << e.episode << ',' << to_string(e.variant) << ','
        << buf << '\n';
  }
}

inline void write_histogram_csv(const std::vector<HistogramBin>& hist,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << "bin_low,bin_high,count\n";
  char buf[96];
  for (const auto& b : hist) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%lld", b.lo, b.hi,
                  static_cast<long long>(b.count));
    out << buf << '\n';
  }
}

}  // namespace lmo::rl
