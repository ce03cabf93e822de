#pragma once

#include <iosfwd>
#include <string>

namespace metamarl {

// Oracle suite behind `gradcheck`: finite-difference checks of the tape,
// closed-form agreement on the analytic zero-sum game, the magic-box bandit
// identities, exact-mode estimator agreement against the brute-force
// meta-value, and the degenerate opponent-modeling equivalence. Returns
// true when everything passes; one line per check is printed to `os`.
bool run_gradcheck(std::ostream& os, const std::string& game_filter = "");

}  // namespace metamarl
