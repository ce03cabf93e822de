#pragma once

#include <string>

#include "metamarl/config.hpp"
#include "metamarl/meta.hpp"
#include "metamarl/policies.hpp"

namespace metamarl {

inline constexpr const char* kVersion = "0.1.0";

// Population named by the config: "preset:ipd", "preset:rps" or a dump file.
Population population_for(const ExperimentConfig& cfg);

// Full train-then-test pipeline over every seed in the config. Writes
// metrics.csv, manifest.json and one checkpoint per seed into out_dir. On
// a failure mid-run, rows produced so far are flushed with a trailing
// failure marker before the error propagates.
void run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace metamarl
