#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace metamarl {

// One line of metrics.csv. chain_step is -1 on per-peer summary rows, which
// are the only rows carrying an AUC.
struct MetricsRow {
  std::string run_id;
  std::string method;
  std::uint64_t seed = 0;
  std::string phase;  // train | val | test
  long iteration = 0;
  long peer_id = 0;
  int chain_step = -1;
  double mean_return_self = 0;
  double mean_return_peers = 0;
  std::optional<double> auc;
};

inline constexpr const char* kMetricsHeader =
    "run_id,method,seed,phase,iteration,peer_id,chain_step,"
    "mean_return_self,mean_return_peers,auc";

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(std::istream& is);

}  // namespace metamarl
