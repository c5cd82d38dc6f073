#include "dpdn/tensor.hpp"

#include <cmath>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dpdn::tensor {

namespace {

// Node buffers of a few hundred KB churn every iteration; with the default
// 128 KB threshold glibc serves them via mmap/munmap, paying kernel
// page-zeroing on every allocation. Keep them on the heap free lists.
struct MallocTuning {
  MallocTuning() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 64 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 64 * 1024 * 1024);
#endif
  }
};

Tape& tape_of(const Tensor& t) {
  if (!t.defined()) throw ShapeMismatch("undefined tensor handle");
  return *t.tape;
}

Tape& same_tape(const Tensor& a, const Tensor& b) {
  Tape& t = tape_of(a);
  if (&t != &tape_of(b)) throw ShapeMismatch("tensors live on different tapes");
  return t;
}

void tune_malloc_once() { static MallocTuning tuning; }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch(std::string(op) + ": shapes " +
                        std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " +
                        std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
  }
}

}  // namespace

const Matrix& Tensor::value() const { return tape_of(*this).val(id); }

double Tensor::scalar() const {
  const Matrix& m = value();
  if (m.rows() != 1 || m.cols() != 1) {
    throw ShapeMismatch("scalar() on a non-1x1 tensor");
  }
  return m(0, 0);
}

Eigen::Index Tensor::rows() const { return value().rows(); }
Eigen::Index Tensor::cols() const { return value().cols(); }

Tape::Tape() {
  tune_malloc_once();
  nodes_.reserve(1024);
}

int Tape::push(Matrix val, std::vector<int> parents,
               std::function<void(Tape&, int)> back) {
  Node n;
  n.val = std::move(val);
  n.parents = std::move(parents);
  for (int p : n.parents) {
    if (nodes_[size_t(p)].needs_grad) n.needs_grad = true;
  }
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[size_t(id)];
  if (!n.grad_ready) {
    n.grad = Matrix::Zero(n.val.rows(), n.val.cols());
    n.grad_ready = true;
  }
  return n.grad;
}

Tensor Tape::constant(Matrix m) {
  const int id = push(std::move(m), {}, nullptr);
  return Tensor{this, id};
}

Tensor Tape::leaf(const std::string& name, const Matrix& value) {
  auto it = leaves_.find(name);
  if (it != leaves_.end()) return Tensor{this, it->second};
  Node n;
  n.val = value;
  n.needs_grad = true;
  n.leaf_name = name;
  nodes_.push_back(std::move(n));
  const int id = int(nodes_.size()) - 1;
  leaves_[name] = id;
  return Tensor{this, id};
}

GradientMap Tape::backward(const Tensor& loss, double seed_weight) {
  if (loss.tape != this) throw ShapeMismatch("loss is not on this tape");
  const Matrix& lv = val(loss.id);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeMismatch("backward needs a scalar loss");
  }

  // Nodes the loss actually depends on.
  std::vector<char> reach(nodes_.size(), 0);
  std::vector<int> stack{loss.id};
  reach[size_t(loss.id)] = 1;
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    for (int p : nodes_[size_t(cur)].parents) {
      if (!reach[size_t(p)] && nodes_[size_t(p)].needs_grad) {
        reach[size_t(p)] = 1;
        stack.push_back(p);
      }
    }
  }

  grad(loss.id)(0, 0) = seed_weight;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[size_t(i)];
    if (reach[size_t(i)] && n.back && n.grad_ready) n.back(*this, i);
  }

  GradientMap out;
  for (const auto& [name, id] : leaves_) {
    Node& n = nodes_[size_t(id)];
    if (reach[size_t(id)]) {
      out.grads[name] =
          n.grad_ready ? n.grad : Matrix::Zero(n.val.rows(), n.val.cols());
    } else {
      out.grads[name] = Matrix::Zero(n.val.rows(), n.val.cols());
      out.disconnected.insert(name);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a, b, "add");
  const int pa = a.id, pb = b.id;
  int id = t.push(a.value() + b.value(), {pa, pb}, [pa, pb](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    if (tp.node(pa).needs_grad) tp.grad(pa) += g;
    if (tp.node(pb).needs_grad) tp.grad(pb) += g;
  });
  return Tensor{&t, id};
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a, b, "sub");
  const int pa = a.id, pb = b.id;
  int id = t.push(a.value() - b.value(), {pa, pb}, [pa, pb](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    if (tp.node(pa).needs_grad) tp.grad(pa) += g;
    if (tp.node(pb).needs_grad) tp.grad(pb) -= g;
  });
  return Tensor{&t, id};
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a, b, "mul");
  const int pa = a.id, pb = b.id;
  int id = t.push(a.value().cwiseProduct(b.value()), {pa, pb},
                  [pa, pb](Tape& tp, int self) {
                    const Matrix& g = tp.grad(self);
                    if (tp.node(pa).needs_grad)
                      tp.grad(pa) += g.cwiseProduct(tp.val(pb));
                    if (tp.node(pb).needs_grad)
                      tp.grad(pb) += g.cwiseProduct(tp.val(pa));
                  });
  return Tensor{&t, id};
}

Tensor scale(const Tensor& a, double c) {
  Tape& t = tape_of(a);
  const int pa = a.id;
  int id = t.push(a.value() * c, {pa}, [pa, c](Tape& tp, int self) {
    if (tp.node(pa).needs_grad) tp.grad(pa) += tp.grad(self) * c;
  });
  return Tensor{&t, id};
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeMismatch("matmul: inner dims " + std::to_string(a.cols()) +
                        " vs " + std::to_string(b.rows()));
  }
  const int pa = a.id, pb = b.id;
  int id = t.push(a.value() * b.value(), {pa, pb},
                  [pa, pb](Tape& tp, int self) {
                    const Matrix& g = tp.grad(self);
                    if (tp.node(pa).needs_grad)
                      tp.grad(pa).noalias() += g * tp.val(pb).transpose();
                    if (tp.node(pb).needs_grad)
                      tp.grad(pb).noalias() += tp.val(pa).transpose() * g;
                  });
  return Tensor{&t, id};
}

Tensor transpose(const Tensor& a) {
  Tape& t = tape_of(a);
  const int pa = a.id;
  int id = t.push(a.value().transpose(), {pa}, [pa](Tape& tp, int self) {
    if (tp.node(pa).needs_grad) tp.grad(pa) += tp.grad(self).transpose();
  });
  return Tensor{&t, id};
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeMismatch("concat_cols of nothing");
  Tape& t = tape_of(xs[0]);
  const Eigen::Index rows = xs[0].rows();
  Eigen::Index cols = 0;
  std::vector<int> parents;
  for (const auto& x : xs) {
    same_tape(xs[0], x);
    if (x.rows() != rows) throw ShapeMismatch("concat_cols: row mismatch");
    cols += x.cols();
    parents.push_back(x.id);
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  std::vector<Eigen::Index> offs, widths;
  for (const auto& x : xs) {
    v.middleCols(at, x.cols()) = x.value();
    offs.push_back(at);
    widths.push_back(x.cols());
    at += x.cols();
  }
  auto ps = parents;
  int id = t.push(std::move(v), std::move(parents),
                  [ps, offs, widths](Tape& tp, int self) {
                    const Matrix& g = tp.grad(self);
                    for (size_t i = 0; i < ps.size(); ++i) {
                      if (tp.node(ps[i]).needs_grad)
                        tp.grad(ps[i]) += g.middleCols(offs[i], widths[i]);
                    }
                  });
  return Tensor{&t, id};
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeMismatch("concat_rows of nothing");
  Tape& t = tape_of(xs[0]);
  const Eigen::Index cols = xs[0].cols();
  Eigen::Index rows = 0;
  std::vector<int> parents;
  for (const auto& x : xs) {
    same_tape(xs[0], x);
    if (x.cols() != cols) throw ShapeMismatch("concat_rows: col mismatch");
    rows += x.rows();
    parents.push_back(x.id);
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  std::vector<Eigen::Index> offs, heights;
  for (const auto& x : xs) {
    v.middleRows(at, x.rows()) = x.value();
    offs.push_back(at);
    heights.push_back(x.rows());
    at += x.rows();
  }
  auto ps = parents;
  int id = t.push(std::move(v), std::move(parents),
                  [ps, offs, heights](Tape& tp, int self) {
                    const Matrix& g = tp.grad(self);
                    for (size_t i = 0; i < ps.size(); ++i) {
                      if (tp.node(ps[i]).needs_grad)
                        tp.grad(ps[i]) += g.middleRows(offs[i], heights[i]);
                    }
                  });
  return Tensor{&t, id};
}

Tensor slice_cols(const Tensor& a, Eigen::Index c0, Eigen::Index len) {
  Tape& t = tape_of(a);
  if (c0 < 0 || len <= 0 || c0 + len > a.cols()) {
    throw ShapeMismatch("slice_cols out of range");
  }
  const int pa = a.id;
  int id = t.push(a.value().middleCols(c0, len), {pa},
                  [pa, c0, len](Tape& tp, int self) {
                    if (tp.node(pa).needs_grad)
                      tp.grad(pa).middleCols(c0, len) += tp.grad(self);
                  });
  return Tensor{&t, id};
}

Tensor relu(const Tensor& a) {
  Tape& t = tape_of(a);
  const int pa = a.id;
  int id = t.push(a.value().cwiseMax(0.0), {pa}, [pa](Tape& tp, int self) {
    if (!tp.node(pa).needs_grad) return;
    const Matrix& x = tp.val(pa);
    const Matrix& g = tp.grad(self);
    tp.grad(pa) += (x.array() > 0.0).cast<double>().matrix().cwiseProduct(g);
  });
  return Tensor{&t, id};
}

Tensor softmax_rows(const Tensor& a) {
  Tape& t = tape_of(a);
  Matrix y = a.value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double m = y.row(i).maxCoeff();
    y.row(i) = (y.row(i).array() - m).exp();
    y.row(i) /= y.row(i).sum();
  }
  const int pa = a.id;
  int id = t.push(std::move(y), {pa}, [pa](Tape& tp, int self) {
    if (!tp.node(pa).needs_grad) return;
    const Matrix& y_ = tp.val(self);
    const Matrix& g = tp.grad(self);
    Matrix& gx = tp.grad(pa);
    for (Eigen::Index i = 0; i < y_.rows(); ++i) {
      const double s = g.row(i).dot(y_.row(i));
      gx.row(i).array() += y_.row(i).array() * (g.row(i).array() - s);
    }
  });
  return Tensor{&t, id};
}

Tensor avg_pool(const Tensor& a) {
  Tape& t = tape_of(a);
  if (a.rows() < 1) throw ShapeMismatch("avg_pool needs at least one row");
  const double inv_n = 1.0 / double(a.rows());
  const int pa = a.id;
  int id = t.push(a.value().colwise().mean(), {pa},
                  [pa, inv_n](Tape& tp, int self) {
                    if (!tp.node(pa).needs_grad) return;
                    const Eigen::RowVectorXd row = tp.grad(self).row(0) * inv_n;
                    tp.grad(pa).rowwise() += row;
                  });
  return Tensor{&t, id};
}

Tensor tile(const Tensor& v, Eigen::Index n) {
  Tape& t = tape_of(v);
  if (v.rows() != 1) throw ShapeMismatch("tile expects a 1 x d row");
  if (n < 1) throw ShapeMismatch("tile count must be >= 1");
  const int pv = v.id;
  int id = t.push(v.value().replicate(n, 1), {pv}, [pv](Tape& tp, int self) {
    if (tp.node(pv).needs_grad) tp.grad(pv) += tp.grad(self).colwise().sum();
  });
  return Tensor{&t, id};
}

Tensor add_row_broadcast(const Tensor& x, const Tensor& bias) {
  Tape& t = same_tape(x, bias);
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw ShapeMismatch("bias must be 1 x cols(x)");
  }
  const int px = x.id, pb = bias.id;
  int id = t.push(x.value().rowwise() + bias.value().row(0), {px, pb},
                  [px, pb](Tape& tp, int self) {
                    const Matrix& g = tp.grad(self);
                    if (tp.node(px).needs_grad) tp.grad(px) += g;
                    if (tp.node(pb).needs_grad)
                      tp.grad(pb) += g.colwise().sum();
                  });
  return Tensor{&t, id};
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Tape& t = same_tape(x, w);
  same_tape(x, bias);
  if (x.cols() != w.rows() || bias.rows() != 1 || bias.cols() != w.cols()) {
    throw ShapeMismatch("linear: x " + std::to_string(x.rows()) + "x" +
                        std::to_string(x.cols()) + ", w " +
                        std::to_string(w.rows()) + "x" +
                        std::to_string(w.cols()) + ", bias 1x" +
                        std::to_string(bias.cols()));
  }
  Matrix y(x.rows(), w.cols());
  y.noalias() = x.value() * w.value();
  y.rowwise() += bias.value().row(0);
  const int px = x.id, pw = w.id, pb = bias.id;
  int id = t.push(std::move(y), {px, pw, pb}, [px, pw, pb](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    if (tp.node(px).needs_grad) {
      tp.grad(px).noalias() += g * tp.val(pw).transpose();
    }
    if (tp.node(pw).needs_grad) {
      tp.grad(pw).noalias() += tp.val(px).transpose() * g;
    }
    if (tp.node(pb).needs_grad) tp.grad(pb) += g.colwise().sum();
  });
  return Tensor{&t, id};
}

Tensor sum_all(const Tensor& a) {
  Tape& t = tape_of(a);
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  const int pa = a.id;
  int id = t.push(std::move(v), {pa}, [pa](Tape& tp, int self) {
    if (!tp.node(pa).needs_grad) return;
    tp.grad(pa).array() += tp.grad(self)(0, 0);
  });
  return Tensor{&t, id};
}

Tensor rows_norm(const Tensor& a) {
  Tape& t = tape_of(a);
  Matrix v = a.value().rowwise().norm();
  const int pa = a.id;
  int id = t.push(std::move(v), {pa}, [pa](Tape& tp, int self) {
    if (!tp.node(pa).needs_grad) return;
    const Matrix& x = tp.val(pa);
    const Matrix& r = tp.val(self);
    const Matrix& g = tp.grad(self);
    Matrix& gx = tp.grad(pa);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (r(i, 0) > 0.0) gx.row(i) += (g(i, 0) / r(i, 0)) * x.row(i);
    }
  });
  return Tensor{&t, id};
}

Tensor sqrt_guarded(const Tensor& a) {
  Tape& t = tape_of(a);
  const int pa = a.id;
  int id = t.push(a.value().cwiseSqrt(), {pa}, [pa](Tape& tp, int self) {
    if (!tp.node(pa).needs_grad) return;
    const Matrix& y = tp.val(self);
    const Matrix& g = tp.grad(self);
    Matrix& gx = tp.grad(pa);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      for (Eigen::Index j = 0; j < y.cols(); ++j) {
        if (y(i, j) > 0.0) gx(i, j) += g(i, j) * 0.5 / y(i, j);
      }
    }
  });
  return Tensor{&t, id};
}

Tensor mul_by_scalar(const Tensor& x, const Tensor& s) {
  Tape& t = same_tape(x, s);
  if (s.rows() != 1 || s.cols() != 1) throw ShapeMismatch("scalar must be 1x1");
  const int px = x.id, ps = s.id;
  int id = t.push(x.value() * s.scalar(), {px, ps},
                  [px, ps](Tape& tp, int self) {
                    const Matrix& g = tp.grad(self);
                    if (tp.node(px).needs_grad)
                      tp.grad(px) += g * tp.val(ps)(0, 0);
                    if (tp.node(ps).needs_grad)
                      tp.grad(ps)(0, 0) += g.cwiseProduct(tp.val(px)).sum();
                  });
  return Tensor{&t, id};
}

Tensor div_by_scalar(const Tensor& x, const Tensor& s) {
  Tape& t = same_tape(x, s);
  if (s.rows() != 1 || s.cols() != 1) throw ShapeMismatch("scalar must be 1x1");
  const double sv = s.scalar();
  if (sv == 0.0) throw ShapeMismatch("division by zero scalar");
  const int px = x.id, ps = s.id;
  int id = t.push(x.value() / sv, {px, ps}, [px, ps](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    const double sv_ = tp.val(ps)(0, 0);
    if (tp.node(px).needs_grad) tp.grad(px) += g / sv_;
    if (tp.node(ps).needs_grad) {
      tp.grad(ps)(0, 0) -= g.cwiseProduct(tp.val(self)).sum() / sv_;
    }
  });
  return Tensor{&t, id};
}

Tensor cross3(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape(a, b);
  if (a.rows() != 1 || a.cols() != 3 || b.rows() != 1 || b.cols() != 3) {
    throw ShapeMismatch("cross3 expects 1x3 rows");
  }
  const Eigen::Vector3d av = a.value().row(0).transpose();
  const Eigen::Vector3d bv = b.value().row(0).transpose();
  Matrix v(1, 3);
  v.row(0) = av.cross(bv).transpose();
  const int pa = a.id, pb = b.id;
  int id = t.push(std::move(v), {pa, pb}, [pa, pb](Tape& tp, int self) {
    const Eigen::Vector3d g = tp.grad(self).row(0).transpose();
    const Eigen::Vector3d av_ = tp.val(pa).row(0).transpose();
    const Eigen::Vector3d bv_ = tp.val(pb).row(0).transpose();
    if (tp.node(pa).needs_grad)
      tp.grad(pa).row(0) += bv_.cross(g).transpose();
    if (tp.node(pb).needs_grad)
      tp.grad(pb).row(0) += g.cross(av_).transpose();
  });
  return Tensor{&t, id};
}

Tensor euclid_norm(const Tensor& a) {
  return sqrt_guarded(sum_all(mul(a, a)));
}

Tensor chamfer(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != 3 || b.cols() != 3 || a.rows() < 1 || b.rows() < 1) {
    throw ShapeMismatch("chamfer expects non-empty N x 3 matrices");
  }
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Eigen::Index m = av.rows(), k = bv.rows();
  std::vector<Eigen::Index> nn_ab(static_cast<size_t>(m));
  std::vector<Eigen::Index> nn_ba(static_cast<size_t>(k));
  // |a_i - b_j|^2 = |a_i|^2 + |b_j|^2 - 2 a_i.b_j, via one GEMM
  Matrix d2(m, k);
  d2.noalias() = av * bv.transpose();
  d2 *= -2.0;
  const Eigen::VectorXd a2 = av.rowwise().squaredNorm();
  const Eigen::VectorXd b2 = bv.rowwise().squaredNorm();
  d2.colwise() += a2;
  d2.rowwise() += b2.transpose();
  // The GEMM expansion picks the neighbor; the reported distance is
  // recomputed directly so exact matches stay exactly zero.
  double sum_ab = 0.0, sum_ba = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::Index bj = 0;
    d2.row(i).minCoeff(&bj);
    nn_ab[size_t(i)] = bj;
    sum_ab += (av.row(i) - bv.row(bj)).norm();
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::Index bi = 0;
    d2.col(j).minCoeff(&bi);
    nn_ba[size_t(j)] = bi;
    sum_ba += (av.row(bi) - bv.row(j)).norm();
  }
  Matrix v(1, 1);
  v(0, 0) = sum_ab / (2.0 * double(m)) + sum_ba / (2.0 * double(k));

  const int pa = a.id, pb = b.id;
  int id = t.push(std::move(v), {pa, pb},
                  [pa, pb, nn_ab, nn_ba](Tape& tp, int self) {
                    const double g = tp.grad(self)(0, 0);
                    const Matrix& av_ = tp.val(pa);
                    const Matrix& bv_ = tp.val(pb);
                    const double wa = g / (2.0 * double(av_.rows()));
                    const double wb = g / (2.0 * double(bv_.rows()));
                    const bool na = tp.node(pa).needs_grad;
                    const bool nb = tp.node(pb).needs_grad;
                    for (Eigen::Index i = 0; i < av_.rows(); ++i) {
                      const Eigen::Index j = nn_ab[size_t(i)];
                      Eigen::RowVector3d d = av_.row(i) - bv_.row(j);
                      const double n = d.norm();
                      if (n <= 0.0) continue;
                      d *= (wa / n);
                      if (na) tp.grad(pa).row(i) += d;
                      if (nb) tp.grad(pb).row(j) -= d;
                    }
                    for (Eigen::Index j = 0; j < bv_.rows(); ++j) {
                      const Eigen::Index i = nn_ba[size_t(j)];
                      Eigen::RowVector3d d = av_.row(i) - bv_.row(j);
                      const double n = d.norm();
                      if (n <= 0.0) continue;
                      d *= (wb / n);
                      if (na) tp.grad(pa).row(i) += d;
                      if (nb) tp.grad(pb).row(j) -= d;
                    }
                  });
  return Tensor{&t, id};
}

Tensor smooth_l1_mean(const Tensor& a, const Tensor& b) {
  Tape& t = same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw LengthMismatch("smooth_l1_mean: point lists differ in shape");
  }
  const Matrix d = a.value() - b.value();
  double total = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      const double x = d(i, j);
      total += std::abs(x) <= 0.1 ? 5.0 * x * x : std::abs(x) - 0.05;
    }
  }
  Matrix v(1, 1);
  v(0, 0) = total / double(d.rows());
  const int pa = a.id, pb = b.id;
  int id = t.push(std::move(v), {pa, pb}, [pa, pb](Tape& tp, int self) {
    const double g = tp.grad(self)(0, 0);
    const Matrix& av_ = tp.val(pa);
    const Matrix& bv_ = tp.val(pb);
    const double inv_n = 1.0 / double(av_.rows());
    const bool na = tp.node(pa).needs_grad;
    const bool nb = tp.node(pb).needs_grad;
    for (Eigen::Index i = 0; i < av_.rows(); ++i) {
      for (Eigen::Index j = 0; j < av_.cols(); ++j) {
        const double x = av_(i, j) - bv_(i, j);
        const double df =
            std::abs(x) <= 0.1 ? 10.0 * x : (x > 0.0 ? 1.0 : -1.0);
        const double gij = g * df * inv_n;
        if (na) tp.grad(pa)(i, j) += gij;
        if (nb) tp.grad(pb)(i, j) -= gij;
      }
    }
  });
  return Tensor{&t, id};
}

}  // namespace dpdn::tensor
