#include "metamarl/metrics.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace metamarl {

namespace {
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << kMetricsHeader << "\n";
  for (const MetricsRow& r : rows) {
    os << r.run_id << "," << r.method << "," << r.seed << "," << r.phase << ","
       << r.iteration << "," << r.peer_id << ",";
    if (r.chain_step >= 0) os << r.chain_step;
    os << "," << fmt(r.mean_return_self) << "," << fmt(r.mean_return_peers) << ",";
    if (r.auc) os << fmt(*r.auc);
    os << "\n";
  }
}

std::vector<MetricsRow> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("metrics: empty file");
  if (line != kMetricsHeader) throw std::runtime_error("metrics: bad header");
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string field;
    MetricsRow r;
    auto next = [&]() {
      if (!std::getline(ss, field, ',')) throw std::runtime_error("metrics: short row");
      return field;
    };
    r.run_id = next();
    r.method = next();
    r.seed = std::stoull(next());
    r.phase = next();
    r.iteration = std::stol(next());
    r.peer_id = std::stol(next());
    std::string cs = next();
    r.chain_step = cs.empty() ? -1 : std::stoi(cs);
    r.mean_return_self = std::stod(next());
    r.mean_return_peers = std::stod(next());
    std::string auc;
    if (std::getline(ss, auc, ',') && !auc.empty()) r.auc = std::stod(auc);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace metamarl
