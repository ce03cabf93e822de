#pragma once

#include <cstdint>
#include <iosfwd>

#include "metamarl/meta.hpp"

namespace metamarl {

// Textual parameter snapshot: shapes plus decimal reals at 17 significant
// digits, so save/load round-trips bit-exactly. The config hash guards
// against evaluating a checkpoint under a different setup.
void save_checkpoint(std::ostream& os, const MetaParams& params,
                     std::uint64_t master_seed, std::uint64_t config_hash);

struct LoadedCheckpoint {
  MetaParams params;
  std::uint64_t master_seed = 0;
};

LoadedCheckpoint load_checkpoint(std::istream& is, std::uint64_t expected_hash);

}  // namespace metamarl
