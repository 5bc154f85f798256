#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace pgs::nn {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

/// Trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, std::size_t r, std::size_t c) : name(std::move(n)), value(r, c), grad(r, c) {}
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

struct Var {
  std::uint32_t id = 0;
};

/// Reverse-mode tape. Each op appends a node holding its forward value and a
/// closure that pushes the node's gradient to its inputs. With recording off
/// the tape is a plain forward evaluator.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  Var constant(Matrix value);
  /// Leaf bound to a parameter; backward() accumulates into `p.grad`.
  Var parameter(Parameter& p);

  const Matrix& value(Var v) const;
  double scalar(Var v) const { return value(v).data.at(0); }

  /// Seeds d(loss)/d(loss) = 1 and runs all recorded closures in reverse.
  void backward(Var loss);

  // Ops. Shapes are checked and mismatches throw std::invalid_argument.
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);                  // elementwise
  Var add_row(Var a, Var row);            // a[r×c] + row[1×c] broadcast
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var tanh(Var a);
  Var gelu(Var a);
  Var softmax_rows(Var a);
  Var log_softmax_col(Var a);             // over a column vector [n×1]
  Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);
  Var transpose(Var a);
  Var slice_cols(Var a, std::size_t start, std::size_t count);
  Var concat_cols(std::span<const Var> parts);
  Var gather_rows(Var table, std::span<const std::int32_t> ids);
  /// One output row per span: the mean of rows [begin, end) of `a`.
  Var segment_mean(Var a, std::span<const std::pair<std::size_t, std::size_t>> spans);
  Var sum_rows(Var a);                    // [r×c] -> [1×c]
  Var mean_all(Var a);                    // -> [1×1]
  Var pick(Var a, std::size_t row, std::size_t col);  // -> [1×1]

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    Matrix* external_grad = nullptr;
    std::function<void(Tape&, std::uint32_t)> backward;
  };

  Var push(Matrix value, std::function<void(Tape&, std::uint32_t)> backward);
  Matrix& grad_of(std::uint32_t id);
  const Matrix& value_of(std::uint32_t id) const;

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace pgs::nn
