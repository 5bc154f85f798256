#include "pgs/nn/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace pgs::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("tensor shape mismatch: ") + what);
}

constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC = 0.044715;

}  // namespace

Var Tape::push(Matrix value, std::function<void(Tape&, std::uint32_t)> backward) {
  Node n;
  n.value = std::move(value);
  if (record_) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Matrix& Tape::value_of(std::uint32_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.value;
}

const Matrix& Tape::value(Var v) const { return value_of(v.id); }

Matrix& Tape::grad_of(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.external_grad) return *n.external_grad;
  if (n.grad.size() == 0) {
    const Matrix& v = value_of(id);
    n.grad = Matrix(v.rows, v.cols);
  }
  return n.grad;
}

Var Tape::constant(Matrix value) { return push(std::move(value), nullptr); }

Var Tape::parameter(Parameter& p) {
  Node n;
  n.external = &p.value;
  if (record_) n.external_grad = &p.grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::backward(Var loss) {
  if (!record_) throw std::logic_error("backward() on a tape that does not record");
  const Matrix& lv = value(loss);
  require(lv.size() == 1, "backward() needs a scalar loss");
  grad_of(loss.id).data[0] += 1.0;
  for (std::int64_t i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.backward) continue;
    if (n.grad.size() == 0) continue;  // no gradient reached this node
    n.backward(*this, static_cast<std::uint32_t>(i));
  }
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.cols == B.rows, "matmul");
  Matrix C(A.rows, B.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    double* c = &C.data[i * C.cols];
    for (std::size_t k = 0; k < A.cols; ++k) {
      const double aik = A.data[i * A.cols + k];
      if (aik == 0.0) continue;
      const double* brow = &B.data[k * B.cols];
      for (std::size_t j = 0; j < B.cols; ++j) c[j] += aik * brow[j];
    }
  }
  return push(std::move(C), [a, b](Tape& t, std::uint32_t out) {
    const Matrix& A = t.value(a);
    const Matrix& B = t.value(b);
    const Matrix& G = t.grad_of(out);
    Matrix& gA = t.grad_of(a.id);
    for (std::size_t i = 0; i < A.rows; ++i) {
      for (std::size_t k = 0; k < A.cols; ++k) {
        double s = 0.0;
        const double* g = &G.data[i * G.cols];
        const double* brow = &B.data[k * B.cols];
        for (std::size_t j = 0; j < B.cols; ++j) s += g[j] * brow[j];
        gA.data[i * A.cols + k] += s;
      }
    }
    Matrix& gB = t.grad_of(b.id);
    for (std::size_t i = 0; i < A.rows; ++i) {
      const double* g = &G.data[i * G.cols];
      for (std::size_t k = 0; k < A.cols; ++k) {
        const double aik = A.data[i * A.cols + k];
        if (aik == 0.0) continue;
        double* gb = &gB.data[k * B.cols];
        for (std::size_t j = 0; j < B.cols; ++j) gb[j] += aik * g[j];
      }
    }
  });
}

Var Tape::add(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.same_shape(B), "add");
  Matrix C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
  return push(std::move(C), [a, b](Tape& t, std::uint32_t out) {
    const Matrix& G = t.grad_of(out);
    Matrix& gA = t.grad_of(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) gA.data[i] += G.data[i];
    Matrix& gB = t.grad_of(b.id);
    for (std::size_t i = 0; i < G.size(); ++i) gB.data[i] += G.data[i];
  });
}

Var Tape::sub(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.same_shape(B), "sub");
  Matrix C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] -= B.data[i];
  return push(std::move(C), [a, b](Tape& t, std::uint32_t out) {
    const Matrix& G = t.grad_of(out);
    Matrix& gA = t.grad_of(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) gA.data[i] += G.data[i];
    Matrix& gB = t.grad_of(b.id);
    for (std::size_t i = 0; i < G.size(); ++i) gB.data[i] -= G.data[i];
  });
}

Var Tape::mul(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.same_shape(B), "mul");
  Matrix C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] *= B.data[i];
  return push(std::move(C), [a, b](Tape& t, std::uint32_t out) {
    const Matrix& A = t.value(a);
    const Matrix& B = t.value(b);
    const Matrix G = t.grad_of(out);
    Matrix& gA = t.grad_of(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) gA.data[i] += G.data[i] * B.data[i];
    Matrix& gB = t.grad_of(b.id);
    for (std::size_t i = 0; i < G.size(); ++i) gB.data[i] += G.data[i] * A.data[i];
  });
}

Var Tape::add_row(Var a, Var row) {
  const Matrix& A = value(a);
  const Matrix& R = value(row);
  require(R.rows == 1 && R.cols == A.cols, "add_row");
  Matrix C = A;
  for (std::size_t i = 0; i < C.rows; ++i)
    for (std::size_t j = 0; j < C.cols; ++j) C.data[i * C.cols + j] += R.data[j];
  return push(std::move(C), [a, row](Tape& t, std::uint32_t out) {
    const Matrix& G = t.grad_of(out);
    Matrix& gA = t.grad_of(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) gA.data[i] += G.data[i];
    Matrix& gR = t.grad_of(row.id);
    for (std::size_t i = 0; i < G.rows; ++i)
      for (std::size_t j = 0; j < G.cols; ++j) gR.data[j] += G.data[i * G.cols + j];
  });
}

Var Tape::scale(Var a, double s) {
  Matrix C = value(a);
  for (double& x : C.data) x *= s;
  return push(std::move(C), [a, s](Tape& t, std::uint32_t out) {
    const Matrix& G = t.grad_of(out);
    Matrix& gA = t.grad_of(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) gA.data[i] += s * G.data[i];
  });
}

Var Tape::add_scalar(Var a, double s) {
  Matrix C = value(a);
  for (double& x : C.data) x += s;
  return push(std::move(C), [a](Tape& t, std::uint32_t out) {
    const Matrix& G = t.grad_of(out);
    Matrix& gA = t.grad_of(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) gA.data[i] += G.data[i];
  });
}

Var Tape::tanh(Var a) {
  Matrix C = value(a);
  for (double& x : C.data) x = std::tanh(x);
  return push(std::move(C), [a](Tape& t, std::uint32_t out) {
    const Matrix& Y = t.value_of(out);
    const Matrix& G = t.grad_of(out);
    Matrix& gA = t.grad_of(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) gA.data[i] += G.data[i] * (1.0 - Y.data[i] * Y.data[i]);
  });
}

Var Tape::gelu(Var a) {
  Matrix C = value(a);
  for (double& x : C.data) x = 0.5 * x * (1.0 + std::tanh(kGeluK * (x + kGeluC * x * x * x)));
  return push(std::move(C), [a](Tape& t, std::uint32_t out) {
    const Matrix& X = t.value(a);
    const Matrix& G = t.grad_of(out);
    Matrix& gA = t.grad_of(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) {
      const double x = X.data[i];
      const double th = std::tanh(kGeluK * (x + kGeluC * x * x * x));
      const double d = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluK * (1.0 + 3.0 * kGeluC * x * x);
      gA.data[i] += G.data[i] * d;
    }
  });
}

Var Tape::softmax_rows(Var a) {
  Matrix C = value(a);
  for (std::size_t i = 0; i < C.rows; ++i) {
    double* r = &C.data[i * C.cols];
    double m = -INFINITY;
    for (std::size_t j = 0; j < C.cols; ++j) m = std::max(m, r[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < C.cols; ++j) z += (r[j] = std::exp(r[j] - m));
    for (std::size_t j = 0; j < C.cols; ++j) r[j] /= z;
  }
  return push(std::move(C), [a](Tape& t, std::uint32_t out) {
    const Matrix& Y = t.value_of(out);
    const Matrix& G = t.grad_of(out);
    Matrix& gA = t.grad_of(a.id);
    for (std::size_t i = 0; i < Y.rows; ++i) {
      const double* y = &Y.data[i * Y.cols];
      const double* g = &G.data[i * G.cols];
      double dot = 0.0;
      for (std::size_t j = 0; j < Y.cols; ++j) dot += y[j] * g[j];
      for (std::size_t j = 0; j < Y.cols; ++j) gA.data[i * Y.cols + j] += y[j] * (g[j] - dot);
    }
  });
}

Var Tape::log_softmax_col(Var a) {
  const Matrix& A = value(a);
  require(A.cols == 1 && A.rows > 0, "log_softmax_col");
  double m = -INFINITY;
  for (double x : A.data) m = std::max(m, x);
  double z = 0.0;
  for (double x : A.data) z += std::exp(x - m);
  const double lse = m + std::log(z);
  Matrix C = A;
  for (double& x : C.data) x -= lse;
  return push(std::move(C), [a](Tape& t, std::uint32_t out) {
    const Matrix& Y = t.value_of(out);
    const Matrix& G = t.grad_of(out);
    Matrix& gA = t.grad_of(a.id);
    double total = 0.0;
    for (double g : G.data) total += g;
    for (std::size_t i = 0; i < Y.size(); ++i) gA.data[i] += G.data[i] - std::exp(Y.data[i]) * total;
  });
}

Var Tape::layer_norm(Var a, Var gamma, Var beta, double eps) {
  const Matrix& A = value(a);
  const Matrix& Ga = value(gamma);
  const Matrix& Be = value(beta);
  require(Ga.rows == 1 && Ga.cols == A.cols && Be.same_shape(Ga), "layer_norm");
  const std::size_t n = A.cols;
  Matrix xhat(A.rows, n);
  std::vector<double> inv_sigma(A.rows);
  Matrix C(A.rows, n);
  for (std::size_t i = 0; i < A.rows; ++i) {
    const double* x = &A.data[i * n];
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(n);
    inv_sigma[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat.data[i * n + j] = (x[j] - mu) * inv_sigma[i];
      C.data[i * n + j] = xhat.data[i * n + j] * Ga.data[j] + Be.data[j];
    }
  }
  return push(std::move(C), [a, gamma, beta, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](
                                Tape& t, std::uint32_t out) {
    const Matrix& Ga = t.value(gamma);
    const Matrix& G = t.grad_of(out);
    const std::size_t n = G.cols;
    Matrix& gG = t.grad_of(gamma.id);
    Matrix& gB = t.grad_of(beta.id);
    for (std::size_t i = 0; i < G.rows; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        gG.data[j] += G.data[i * n + j] * xhat.data[i * n + j];
        gB.data[j] += G.data[i * n + j];
      }
    }
    Matrix& gA = t.grad_of(a.id);
    for (std::size_t i = 0; i < G.rows; ++i) {
      double mean_d = 0.0;
      double mean_dx = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double d = G.data[i * n + j] * Ga.data[j];
        mean_d += d;
        mean_dx += d * xhat.data[i * n + j];
      }
      mean_d /= static_cast<double>(n);
      mean_dx /= static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) {
        const double d = G.data[i * n + j] * Ga.data[j];
        gA.data[i * n + j] += inv_sigma[i] * (d - mean_d - xhat.data[i * n + j] * mean_dx);
      }
    }
  });
}

Var Tape::transpose(Var a) {
  const Matrix& A = value(a);
  Matrix C(A.cols, A.rows);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) C(j, i) = A(i, j);
  return push(std::move(C), [a](Tape& t, std::uint32_t out) {
    const Matrix& G = t.grad_of(out);
    Matrix& gA = t.grad_of(a.id);
    for (std::size_t i = 0; i < G.rows; ++i)
      for (std::size_t j = 0; j < G.cols; ++j) gA(j, i) += G(i, j);
  });
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t count) {
  const Matrix& A = value(a);
  require(start + count <= A.cols, "slice_cols");
  Matrix C(A.rows, count);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < count; ++j) C(i, j) = A(i, start + j);
  return push(std::move(C), [a, start](Tape& t, std::uint32_t out) {
    const Matrix& G = t.grad_of(out);
    Matrix& gA = t.grad_of(a.id);
    for (std::size_t i = 0; i < G.rows; ++i)
      for (std::size_t j = 0; j < G.cols; ++j) gA(i, start + j) += G(i, j);
  });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const std::size_t rows = value(parts[0]).rows;
  std::size_t cols = 0;
  for (Var p : parts) {
    require(value(p).rows == rows, "concat_cols");
    cols += value(p).cols;
  }
  Matrix C(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Matrix& P = value(p);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < P.cols; ++j) C(i, off + j) = P(i, j);
    off += P.cols;
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return push(std::move(C), [ins = std::move(ins)](Tape& t, std::uint32_t out) {
    const Matrix G = t.grad_of(out);
    std::size_t off = 0;
    for (Var p : ins) {
      Matrix& gP = t.grad_of(p.id);
      for (std::size_t i = 0; i < gP.rows; ++i)
        for (std::size_t j = 0; j < gP.cols; ++j) gP(i, j) += G(i, off + j);
      off += gP.cols;
    }
  });
}

Var Tape::gather_rows(Var table, std::span<const std::int32_t> ids) {
  const Matrix& T = value(table);
  Matrix C(ids.size(), T.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < T.rows, "gather_rows id out of range");
    for (std::size_t j = 0; j < T.cols; ++j) C(i, j) = T(static_cast<std::size_t>(ids[i]), j);
  }
  std::vector<std::int32_t> idv(ids.begin(), ids.end());
  return push(std::move(C), [table, idv = std::move(idv)](Tape& t, std::uint32_t out) {
    const Matrix& G = t.grad_of(out);
    Matrix& gT = t.grad_of(table.id);
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (std::size_t j = 0; j < G.cols; ++j) gT(static_cast<std::size_t>(idv[i]), j) += G(i, j);
  });
}

Var Tape::segment_mean(Var a, std::span<const std::pair<std::size_t, std::size_t>> spans) {
  const Matrix& A = value(a);
  Matrix C(spans.size(), A.cols);
  for (std::size_t s = 0; s < spans.size(); ++s) {
    const auto [b, e] = spans[s];
    require(b < e && e <= A.rows, "segment_mean span");
    const double inv = 1.0 / static_cast<double>(e - b);
    for (std::size_t r = b; r < e; ++r)
      for (std::size_t j = 0; j < A.cols; ++j) C(s, j) += A(r, j) * inv;
  }
  std::vector<std::pair<std::size_t, std::size_t>> sv(spans.begin(), spans.end());
  return push(std::move(C), [a, sv = std::move(sv)](Tape& t, std::uint32_t out) {
    const Matrix& G = t.grad_of(out);
    Matrix& gA = t.grad_of(a.id);
    for (std::size_t s = 0; s < sv.size(); ++s) {
      const auto [b, e] = sv[s];
      const double inv = 1.0 / static_cast<double>(e - b);
      for (std::size_t r = b; r < e; ++r)
        for (std::size_t j = 0; j < G.cols; ++j) gA(r, j) += G(s, j) * inv;
    }
  });
}

Var Tape::sum_rows(Var a) {
  const Matrix& A = value(a);
  Matrix C(1, A.cols);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) C.data[j] += A(i, j);
  return push(std::move(C), [a](Tape& t, std::uint32_t out) {
    const Matrix& G = t.grad_of(out);
    Matrix& gA = t.grad_of(a.id);
    for (std::size_t i = 0; i < gA.rows; ++i)
      for (std::size_t j = 0; j < gA.cols; ++j) gA(i, j) += G.data[j];
  });
}

Var Tape::mean_all(Var a) {
  const Matrix& A = value(a);
  require(A.size() > 0, "mean_all of empty");
  double s = 0.0;
  for (double x : A.data) s += x;
  Matrix C(1, 1, s / static_cast<double>(A.size()));
  return push(std::move(C), [a](Tape& t, std::uint32_t out) {
    const double g = t.grad_of(out).data[0];
    Matrix& gA = t.grad_of(a.id);
    const double share = g / static_cast<double>(gA.size());
    for (double& x : gA.data) x += share;
  });
}

Var Tape::pick(Var a, std::size_t row, std::size_t col) {
  const Matrix& A = value(a);
  require(row < A.rows && col < A.cols, "pick");
  Matrix C(1, 1, A(row, col));
  return push(std::move(C), [a, row, col](Tape& t, std::uint32_t out) {
    const double g = t.grad_of(out).data[0];
    t.grad_of(a.id)(row, col) += g;
  });
}

}  // namespace pgs::nn
