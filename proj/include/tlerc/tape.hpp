#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tlerc/params.hpp"
#include "tlerc/tensor.hpp"

namespace tlerc {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  double item() const { return value().item(); }
  std::size_t size() const { return value().size(); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Ordered record of primitive applications for reverse-mode differentiation.
// A tape is single-use: backward() may be called once.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::span<const double> out_grad)>;

  // With grad disabled every parameter is bound as a constant and no
  // backward closures are stored.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);

  // Binds a parameter as a leaf. The same name always yields the same leaf so
  // gradients from repeated uses accumulate in one place. The ParameterSet
  // must outlive the tape and stay unmodified while it is in use.
  Var param(const ParameterSet& params, const std::string& name);

  // Parameters listed here are bound without gradients.
  void set_frozen(const FreezeMask* frozen) { frozen_ = frozen; }
  bool grad_enabled() const { return grad_enabled_; }

  GradientMap backward(Var loss);
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  // Primitive plumbing.
  Var record(const char* kind, Tensor value, std::initializer_list<Var> inputs,
             BackwardFn fn);
  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of a node, zero-initialized on first access.
  std::span<double> grad(std::size_t id);

 private:
  struct Node {
    const char* kind = "";
    const Tensor* ref = nullptr;  // parameter leaves alias the ParameterSet
    Tensor own;
    std::vector<double> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> leaves_;
  const FreezeMask* frozen_ = nullptr;
  bool grad_enabled_;
  bool consumed_ = false;
};

// Primitives. Every output is checked for finiteness; a non-finite result
// raises NumericError naming the primitive.
namespace ops {

enum class Elementwise { sigmoid, tanh, softplus, exp, log, neg, mul_scalar };

Var elementwise(Elementwise kind, Var x, double scalar = 1.0);
Var sigmoid(Var x);
Var tanh(Var x);
Var softplus(Var x);
Var exp(Var x);
Var log(Var x);
Var neg(Var x);
Var mul_scalar(Var x, double c);
Var add_scalar(Var x, double c);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

// W x + b, with W of shape m x n, x of n, b of m.
Var linear(Var x, Var W, Var b);
Var matvec(Var W, Var x);

Var concat(Var a, Var b);
Var slice(Var x, std::size_t offset, std::size_t length);
// Row `index` of a matrix, as a vector.
Var row(Var table, std::size_t index);

Var sum(Var x);
// Sum of scalar Vars as one node.
Var sum_scalars(std::span<const Var> terms);

Var softmax(Var x);
Var log_softmax(Var x);
Var cross_entropy(Var logits, std::size_t gold);
Var mse(Var pred, Var target);

}  // namespace ops

inline Var operator+(Var a, Var b) { return ops::add(a, b); }
inline Var operator-(Var a, Var b) { return ops::sub(a, b); }
inline Var operator*(Var a, Var b) { return ops::mul(a, b); }

// Plain (tape-free) helpers shared by decoders and metrics.
std::vector<double> softmax_values(std::span<const double> x);
std::vector<double> log_softmax_values(std::span<const double> x);
// Index of the largest value; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> x);

}  // namespace tlerc
