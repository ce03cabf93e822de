#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace metamarl {

// Scalar reverse-mode differentiation on a growable tape. Supports
// graph-creating gradients (gradient of gradient), a stop-gradient op and
// the magic-box op: forward value exactly 1, derivative w.r.t. each
// argument equal to the box itself, which reinjects score-function terms
// into higher-order derivatives.
//
// Nodes are immutable once created and parents always precede children,
// so a tape can be replayed or extended but never rewritten. A tape must
// be used by one thread at a time.

enum class Op : std::uint8_t {
  kConst,
  kParam,
  kAdd,
  kMul,
  kNeg,
  kExp,
  kLog,
  kPow,
  kDiv,
  kSum,
  kStopGrad,
  kMagicBox,
};

struct TapeNode {
  Op op;
  double value = 0;
  double aux = 0;  // exponent for kPow
  std::int32_t a = -1;
  std::int32_t b = -1;
  std::int32_t list_pos = -1;  // offset into the parent-list pool (kSum, kMagicBox)
  std::int32_t list_len = 0;
};

struct GradRequest {
  int output = -1;
  std::vector<int> wrt;
  bool create_graph = false;
};

class Tape {
 public:
  Tape() { nodes_.reserve(1024); }

  int constant(double v);
  int param(double v);
  int add(int a, int b);
  int mul(int a, int b);
  int neg(int a);
  int exp_(int a);
  int log_(int a);   // domain error on non-positive input
  int pow_(int a, double exponent);
  int div(int a, int b);  // domain error on zero divisor
  int sum(std::span<const int> terms);
  int stop_gradient(int a);
  int magic_box(std::span<const int> ws);

  double value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const TapeNode& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  std::span<const std::int32_t> parent_list(int id) const {
    const TapeNode& n = nodes_[static_cast<size_t>(id)];
    return {list_pool_.data() + n.list_pos, static_cast<size_t>(n.list_len)};
  }

  // Reverse accumulation from `output`, deterministic order (node id
  // descending). Requires every wrt node to be a kParam; otherwise throws.
  // With create_graph the result is a vector of node ids whose values are
  // the first-order gradient and which can be differentiated again.
  std::vector<double> gradient_values(const GradRequest& req) const;
  std::vector<int> gradient_nodes(const GradRequest& req);

  // Internal variants without the param-only restriction. `stop_at` marks
  // nodes treated as independent inputs: adjoints accumulate on them but do
  // not propagate through (used to step a chain one update at a time).
  std::vector<double> backward_values(int output, std::span<const int> wrt,
                                      std::span<const int> stop_at = {}) const;
  std::vector<int> backward_nodes(int output, std::span<const int> wrt,
                                  std::span<const int> stop_at = {});

 private:
  int push(TapeNode n);
  void check_finite(int id) const;
  void validate_request(const GradRequest& req) const;

  std::vector<TapeNode> nodes_;
  std::vector<std::int32_t> list_pool_;
};

// Convenience handle for building small expressions with operators.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  double value() const { return tape->value(id); }
};

inline Var operator+(Var x, Var y) { return {x.tape, x.tape->add(x.id, y.id)}; }
inline Var operator*(Var x, Var y) { return {x.tape, x.tape->mul(x.id, y.id)}; }
inline Var operator-(Var x) { return {x.tape, x.tape->neg(x.id)}; }
inline Var operator-(Var x, Var y) { return x + (-y); }
inline Var operator/(Var x, Var y) { return {x.tape, x.tape->div(x.id, y.id)}; }
inline Var operator*(double c, Var x) {
  return {x.tape, x.tape->mul(x.tape->constant(c), x.id)};
}
inline Var operator+(Var x, double c) {
  return {x.tape, x.tape->add(x.id, x.tape->constant(c))};
}
inline Var vexp(Var x) { return {x.tape, x.tape->exp_(x.id)}; }
inline Var vlog(Var x) { return {x.tape, x.tape->log_(x.id)}; }

}  // namespace metamarl
