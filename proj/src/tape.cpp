#include "metamarl/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace metamarl {

int Tape::push(TapeNode n) {
  nodes_.push_back(n);
  int id = static_cast<int>(nodes_.size()) - 1;
  check_finite(id);
  return id;
}

void Tape::check_finite(int id) const {
  if (!std::isfinite(nodes_[static_cast<size_t>(id)].value)) {
    throw std::domain_error("tape: non-finite value at node " +
                            std::to_string(id));
  }
}

int Tape::constant(double v) { return push({Op::kConst, v}); }

int Tape::param(double v) { return push({Op::kParam, v}); }

int Tape::add(int a, int b) {
  return push({Op::kAdd, value(a) + value(b), 0, a, b});
}

int Tape::mul(int a, int b) {
  return push({Op::kMul, value(a) * value(b), 0, a, b});
}

int Tape::neg(int a) { return push({Op::kNeg, -value(a), 0, a}); }

int Tape::exp_(int a) { return push({Op::kExp, std::exp(value(a)), 0, a}); }

int Tape::log_(int a) {
  if (!(value(a) > 0)) throw std::domain_error("tape: log of non-positive value");
  return push({Op::kLog, std::log(value(a)), 0, a});
}

int Tape::pow_(int a, double exponent) {
  double v = std::pow(value(a), exponent);
  return push({Op::kPow, v, exponent, a});
}

int Tape::div(int a, int b) {
  if (value(b) == 0) throw std::domain_error("tape: division by zero");
  return push({Op::kDiv, value(a) / value(b), 0, a, b});
}

int Tape::sum(std::span<const int> terms) {
  double v = 0;
  for (int t : terms) v += value(t);
  TapeNode n{Op::kSum, v};
  n.list_pos = static_cast<std::int32_t>(list_pool_.size());
  n.list_len = static_cast<std::int32_t>(terms.size());
  list_pool_.insert(list_pool_.end(), terms.begin(), terms.end());
  return push(n);
}

int Tape::stop_gradient(int a) {
  return push({Op::kStopGrad, value(a), 0, a});
}

int Tape::magic_box(std::span<const int> ws) {
  if (ws.empty()) throw std::invalid_argument("tape: magic_box needs arguments");
  TapeNode n{Op::kMagicBox, 1.0};  // exp(x - stop(x)), pinned to exactly 1
  n.list_pos = static_cast<std::int32_t>(list_pool_.size());
  n.list_len = static_cast<std::int32_t>(ws.size());
  list_pool_.insert(list_pool_.end(), ws.begin(), ws.end());
  return push(n);
}

void Tape::validate_request(const GradRequest& req) const {
  if (req.output < 0 || req.output >= size())
    throw std::invalid_argument("tape: gradient output out of range");
  for (int w : req.wrt) {
    if (w < 0 || w >= size() || node(w).op != Op::kParam)
      throw std::invalid_argument("tape: gradient wrt non-param node");
  }
}

namespace {

// Adjoint arithmetic for the two backward modes: plain doubles, or fresh
// tape nodes when the gradient itself must stay differentiable.
struct ValueAcc {
  using T = double;
  Tape* tape;
  T one() const { return 1.0; }
  T combine(T a, T b) const { return a + b; }
  T mul_node(T g, int n) const { return g * tape->value(n); }
  T div_node(T g, int n) const { return g / tape->value(n); }
  T neg(T g) const { return -g; }
  T pow_rule(T g, int a, double k) const {
    return g * k * std::pow(tape->value(a), k - 1);
  }
  T zero() const { return 0.0; }
};

struct NodeAcc {
  using T = int;
  Tape* tape;
  T one() const { return tape->constant(1.0); }
  T combine(T a, T b) const { return tape->add(a, b); }
  T mul_node(T g, int n) const { return tape->mul(g, n); }
  T div_node(T g, int n) const { return tape->div(g, n); }
  T neg(T g) const { return tape->neg(g); }
  T pow_rule(T g, int a, double k) const {
    return tape->mul(tape->mul(g, tape->constant(k)), tape->pow_(a, k - 1));
  }
  T zero() const { return tape->constant(0.0); }
};

template <typename Acc>
std::vector<typename Acc::T> run_backward(Tape& tape, int output,
                                          std::span<const int> wrt,
                                          std::span<const int> stop_at,
                                          Acc acc) {
  using T = typename Acc::T;
  const int n = output + 1;
  std::vector<T> adj(static_cast<size_t>(n));
  std::vector<unsigned char> seen(static_cast<size_t>(n), 0);
  std::vector<unsigned char> stop(static_cast<size_t>(n), 0);
  for (int s : stop_at)
    if (s < n) stop[static_cast<size_t>(s)] = 1;
  for (int w : wrt)
    if (w < n) stop[static_cast<size_t>(w)] = 1;

  adj[static_cast<size_t>(output)] = acc.one();
  seen[static_cast<size_t>(output)] = 1;

  auto deposit = [&](int p, T g) {
    if (seen[static_cast<size_t>(p)])
      adj[static_cast<size_t>(p)] = acc.combine(adj[static_cast<size_t>(p)], g);
    else {
      adj[static_cast<size_t>(p)] = g;
      seen[static_cast<size_t>(p)] = 1;
    }
  };

  // Single sweep in id-descending order; accumulation order is therefore
  // fixed, making runs bit-reproducible.
  for (int id = output; id >= 0; --id) {
    if (!seen[static_cast<size_t>(id)]) continue;
    if (stop[static_cast<size_t>(id)]) continue;  // treated as an input
    const TapeNode nd = tape.node(id);  // by value: deposits may realloc nodes
    T g = adj[static_cast<size_t>(id)];
    switch (nd.op) {
      case Op::kConst:
      case Op::kParam:
      case Op::kStopGrad:
        break;
      case Op::kAdd:
        deposit(nd.a, g);
        deposit(nd.b, g);
        break;
      case Op::kMul:
        deposit(nd.a, acc.mul_node(g, nd.b));
        deposit(nd.b, acc.mul_node(g, nd.a));
        break;
      case Op::kNeg:
        deposit(nd.a, acc.neg(g));
        break;
      case Op::kExp:
        deposit(nd.a, acc.mul_node(g, id));  // d exp = exp, reuse this node
        break;
      case Op::kLog:
        deposit(nd.a, acc.div_node(g, nd.a));
        break;
      case Op::kPow:
        if (nd.aux != 0) deposit(nd.a, acc.pow_rule(g, nd.a, nd.aux));
        break;
      case Op::kDiv:
        deposit(nd.a, acc.div_node(g, nd.b));
        deposit(nd.b, acc.neg(acc.div_node(acc.mul_node(g, id), nd.b)));
        break;
      case Op::kSum:
        for (std::int32_t p : tape.parent_list(id)) deposit(p, g);
        break;
      case Op::kMagicBox:
        for (std::int32_t p : tape.parent_list(id))
          deposit(p, acc.mul_node(g, id));
        break;
    }
  }

  std::vector<T> out;
  out.reserve(wrt.size());
  for (int w : wrt) {
    if (w < n && seen[static_cast<size_t>(w)])
      out.push_back(adj[static_cast<size_t>(w)]);
    else
      out.push_back(acc.zero());
  }
  return out;
}

}  // namespace

std::vector<double> Tape::backward_values(int output, std::span<const int> wrt,
                                          std::span<const int> stop_at) const {
  Tape& self = const_cast<Tape&>(*this);  // no nodes are created in value mode
  return run_backward(self, output, wrt, stop_at, ValueAcc{&self});
}

std::vector<int> Tape::backward_nodes(int output, std::span<const int> wrt,
                                      std::span<const int> stop_at) {
  return run_backward(*this, output, wrt, stop_at, NodeAcc{this});
}

std::vector<double> Tape::gradient_values(const GradRequest& req) const {
  validate_request(req);
  return backward_values(req.output, req.wrt);
}

std::vector<int> Tape::gradient_nodes(const GradRequest& req) {
  validate_request(req);
  return backward_nodes(req.output, req.wrt);
}

}  // namespace metamarl
