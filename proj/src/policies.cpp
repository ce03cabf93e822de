#include "metamarl/policies.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace metamarl {

PolicyParams zero_params(const MatrixGame& game, int agent_id) {
  PolicyParams p;
  p.agent_id = agent_id;
  p.n_states = game.n_states();
  p.n_actions = game.n_actions;
  p.logits.assign(static_cast<size_t>(p.dim()), 0.0);
  return p;
}

void logp_row(std::span<const double> row, std::span<double> out) {
  const int n = static_cast<int>(row.size());
  double m = row[0];
  for (int a = 1; a < n; ++a) m = std::max(m, row[a]);
  double s = 0;
  for (int a = 0; a < n; ++a) {
    out[a] = row[a] + (-m);
    s += std::exp(out[a]);
  }
  double lg = std::log(s);
  for (int a = 0; a < n; ++a) out[a] = out[a] + (-lg);
}

std::vector<double> action_probs(const PolicyParams& params, int state) {
  if (state < 0 || state >= params.n_states)
    throw std::out_of_range("action_probs: state out of range");
  std::vector<double> lp(static_cast<size_t>(params.n_actions));
  logp_row({&params.logits[static_cast<size_t>(state) * params.n_actions],
            static_cast<size_t>(params.n_actions)},
           lp);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

SampledAction sample_action(const PolicyParams& params, int state, Rng& rng) {
  std::vector<double> p = action_probs(params, state);
  int a = sample_index(rng, p.data(), params.n_actions);
  return {a, std::log(p[static_cast<size_t>(a)])};
}

const char* persona_kind_name(PersonaKind k) {
  switch (k) {
    case PersonaKind::kCooperating: return "cooperating";
    case PersonaKind::kDefecting: return "defecting";
    case PersonaKind::kRock: return "rock";
    case PersonaKind::kPaper: return "paper";
    case PersonaKind::kScissors: return "scissors";
    case PersonaKind::kUniform: return "uniform";
  }
  return "?";
}

PersonaKind persona_kind_from(const std::string& name) {
  for (PersonaKind k :
       {PersonaKind::kCooperating, PersonaKind::kDefecting, PersonaKind::kRock,
        PersonaKind::kPaper, PersonaKind::kScissors, PersonaKind::kUniform}) {
    if (name == persona_kind_name(k)) return k;
  }
  throw std::invalid_argument("unknown persona kind: " + name);
}

namespace {

constexpr double kProbFloor = 1e-9;

void set_two_action_row(PolicyParams& p, int state, double p_first) {
  p_first = std::clamp(p_first, kProbFloor, 1.0 - kProbFloor);
  p.logit(state, 0) = std::log(p_first);
  p.logit(state, 1) = std::log(1.0 - p_first);
}

// Preferred-action probability uniform on [1/3, 1], remaining mass split
// uniformly; rejected until the preferred probability is strictly largest.
void set_preference_row(PolicyParams& p, int state, int preferred, Rng& rng) {
  for (;;) {
    double pref = uniform(rng, 1.0 / 3.0, 1.0);
    double u = next_double(rng);
    double q1 = u * (1.0 - pref);
    double q2 = (1.0 - u) * (1.0 - pref);
    if (pref > q1 && pref > q2) {
      double probs[3];
      int other = 0;
      for (int a = 0; a < 3; ++a) {
        if (a == preferred)
          probs[a] = pref;
        else
          probs[a] = (other++ == 0) ? q1 : q2;
      }
      for (int a = 0; a < 3; ++a)
        p.logit(state, a) = std::log(std::max(probs[a], kProbFloor));
      return;
    }
  }
}

}  // namespace

PolicyParams sample_persona(const MatrixGame& game, const PersonaSpec& spec, Rng& rng) {
  PolicyParams p = zero_params(game, /*agent_id=*/1);
  switch (spec.kind) {
    case PersonaKind::kCooperating:
      if (game.n_actions != 2) throw std::invalid_argument("persona/game mismatch");
      for (int s = 0; s < p.n_states; ++s)
        set_two_action_row(p, s, uniform(rng, 0.5, 1.0));
      break;
    case PersonaKind::kDefecting:
      if (game.n_actions != 2) throw std::invalid_argument("persona/game mismatch");
      for (int s = 0; s < p.n_states; ++s)
        set_two_action_row(p, s, uniform(rng, 0.0, 0.5));
      break;
    case PersonaKind::kRock:
    case PersonaKind::kPaper:
    case PersonaKind::kScissors: {
      if (game.n_actions != 3) throw std::invalid_argument("persona/game mismatch");
      int preferred = spec.kind == PersonaKind::kRock    ? 0
                      : spec.kind == PersonaKind::kPaper ? 1
                                                         : 2;
      for (int s = 0; s < p.n_states; ++s) set_preference_row(p, s, preferred, rng);
      break;
    }
    case PersonaKind::kUniform:
      break;
  }
  return p;
}

Population build_population(const MatrixGame& game,
                            std::span<const std::pair<PersonaKind, int>> counts,
                            SplitSizes split, std::uint64_t seed) {
  Population pop;
  for (const auto& [kind, count] : counts) {
    for (int i = 0; i < count; ++i) {
      PersonaRecord rec;
      rec.kind = kind;
      rec.seed = stream_seed(seed, "persona", pop.members.size());
      Rng rng = make_rng(rec.seed);
      rec.params = sample_persona(game, {kind, rec.seed}, rng);
      pop.members.push_back(std::move(rec));
    }
  }
  int total = static_cast<int>(pop.members.size());
  if (split.n_train + split.n_val + split.n_test != total)
    throw std::invalid_argument("build_population: split sizes must sum to member count");

  std::vector<int> order(static_cast<size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(stream_seed(seed, "split"));
  for (int i = total - 1; i > 0; --i) {
    int j = static_cast<int>(next_double(rng) * (i + 1));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  pop.train.assign(order.begin(), order.begin() + split.n_train);
  pop.val.assign(order.begin() + split.n_train,
                 order.begin() + split.n_train + split.n_val);
  pop.test.assign(order.begin() + split.n_train + split.n_val, order.end());
  return pop;
}

Population ipd_population(std::uint64_t seed) {
  MatrixGame game = make_ipd();
  std::pair<PersonaKind, int> counts[] = {{PersonaKind::kCooperating, 240},
                                          {PersonaKind::kDefecting, 240}};
  return build_population(game, counts, {400, 40, 40}, seed);
}

Population rps_population(const MatrixGame& game, std::uint64_t seed) {
  std::pair<PersonaKind, int> counts[] = {{PersonaKind::kRock, 240},
                                          {PersonaKind::kPaper, 240},
                                          {PersonaKind::kScissors, 240}};
  return build_population(game, counts, {600, 60, 60}, seed);
}

void dump_population(const Population& pop, std::ostream& os) {
  const PolicyParams& first = pop.members.front().params;
  os << "members " << pop.members.size() << " states " << first.n_states
     << " actions " << first.n_actions << "\n";
  char buf[32];
  for (const PersonaRecord& rec : pop.members) {
    os << persona_kind_name(rec.kind) << " " << rec.seed;
    for (double v : rec.params.logits) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << " " << buf;
    }
    os << "\n";
  }
  auto emit_split = [&](const char* name, const std::vector<int>& idx) {
    os << name;
    for (int i : idx) os << " " << i;
    os << "\n";
  };
  emit_split("train", pop.train);
  emit_split("val", pop.val);
  emit_split("test", pop.test);
}

Population load_population(std::istream& is) {
  std::string word;
  size_t n;
  int n_states, n_actions;
  if (!(is >> word >> n) || word != "members")
    throw std::runtime_error("population: bad header");
  if (!(is >> word >> n_states) || word != "states")
    throw std::runtime_error("population: bad header");
  if (!(is >> word >> n_actions) || word != "actions")
    throw std::runtime_error("population: bad header");
  Population pop;
  for (size_t i = 0; i < n; ++i) {
    PersonaRecord rec;
    std::string kind;
    if (!(is >> kind >> rec.seed))
      throw std::runtime_error("population: truncated record");
    rec.kind = persona_kind_from(kind);
    rec.params.agent_id = 1;
    rec.params.n_states = n_states;
    rec.params.n_actions = n_actions;
    rec.params.logits.resize(static_cast<size_t>(n_states) * n_actions);
    for (double& v : rec.params.logits)
      if (!(is >> v)) throw std::runtime_error("population: truncated logits");
    pop.members.push_back(std::move(rec));
  }
  auto read_split = [&](const char* name, std::vector<int>& idx) {
    if (!(is >> word) || word != name)
      throw std::runtime_error("population: missing split " + std::string(name));
    std::string line;
    std::getline(is, line);
    std::stringstream ss(line);
    int v;
    while (ss >> v) idx.push_back(v);
  };
  read_split("train", pop.train);
  read_split("val", pop.val);
  read_split("test", pop.test);
  return pop;
}

}  // namespace metamarl
