#include "dpdn/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "dpdn/errors.hpp"

namespace dpdn::tensor {

Matrix& ParamStore::create(const std::string& name, Eigen::Index rows,
                           Eigen::Index cols) {
  if (entries_.count(name)) throw ShapeMismatch("parameter exists: " + name);
  Entry e;
  e.value = Matrix::Zero(rows, cols);
  e.m = Matrix::Zero(rows, cols);
  e.v = Matrix::Zero(rows, cols);
  return entries_.emplace(name, std::move(e)).first->second.value;
}

Matrix& ParamStore::create_uniform(const std::string& name, Eigen::Index rows,
                                   Eigen::Index cols, Eigen::Index fan_in,
                                   uint64_t seed) {
  Matrix& v = create(name, rows, cols);
  Rng rng(derive_seed(seed, name));
  const double lim = std::sqrt(1.0 / double(fan_in));
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) v(i, j) = rng.uniform(-lim, lim);
  }
  return v;
}

const Matrix& ParamStore::value(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ShapeMismatch("no such parameter: " + name);
  return it->second.value;
}

Matrix& ParamStore::value(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ShapeMismatch("no such parameter: " + name);
  return it->second.value;
}

void adam_step(ParamStore& store, const GradientMap& grads, double lr,
               double beta1, double beta2, double eps) {
  const long t = store.step_ + 1;
  const double bc1 = 1.0 - std::pow(beta1, double(t));
  const double bc2 = 1.0 - std::pow(beta2, double(t));
  for (auto& [name, e] : store.entries_) {
    auto it = grads.grads.find(name);
    if (it == grads.grads.end()) {
      throw ShapeMismatch("missing gradient for parameter: " + name);
    }
    const Matrix& g = it->second;
    if (g.rows() != e.value.rows() || g.cols() != e.value.cols()) {
      throw ShapeMismatch("gradient shape mismatch for parameter: " + name);
    }
    e.m = beta1 * e.m + (1.0 - beta1) * g;
    e.v = beta2 * e.v + (1.0 - beta2) * g.cwiseProduct(g);
    const Matrix m_hat = e.m / bc1;
    const Matrix v_hat = e.v / bc2;
    e.value -=
        lr * m_hat.cwiseQuotient(v_hat.cwiseSqrt().array().matrix() +
                                 Matrix::Constant(g.rows(), g.cols(), eps));
  }
  store.step_ = t;
}

Tensor use_param(Tape& tape, const ParamStore& store,
                 const std::string& name) {
  return tape.leaf(name, store.value(name));
}

GradientMap backward(Tape& tape, const Tensor& loss, const ParamStore& store,
                     double seed_weight) {
  GradientMap gm = tape.backward(loss, seed_weight);
  for (const auto& [name, e] : store.entries()) {
    if (!gm.grads.count(name)) {
      gm.grads[name] = Matrix::Zero(e.value.rows(), e.value.cols());
      gm.disconnected.insert(name);
    }
  }
  return gm;
}

namespace {

constexpr char kMagic[4] = {'D', 'P', 'D', 'N'};
constexpr uint32_t kVersion = 1;

void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<const char*>(b), 8);
}

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
  return v;
}

void write_f32(std::ostream& os, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  write_u32(os, u);
}

float read_f32(std::istream& is) {
  const uint32_t u = read_u32(is);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  for (const auto& [name, e] : store.entries()) {
    write_u64(os, name.size());
    os.write(name.data(), std::streamsize(name.size()));
    write_u64(os, 2);
    write_u64(os, uint64_t(e.value.rows()));
    write_u64(os, uint64_t(e.value.cols()));
    for (Eigen::Index i = 0; i < e.value.rows(); ++i) {
      for (Eigen::Index j = 0; j < e.value.cols(); ++j) {
        write_f32(os, float(e.value(i, j)));
      }
    }
  }
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("bad checkpoint magic in " + path);
  }
  const uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  ParamStore store;
  while (true) {
    is.peek();
    if (is.eof()) break;
    const uint64_t name_len = read_u64(is);
    std::string name(name_len, '\0');
    is.read(name.data(), std::streamsize(name_len));
    const uint64_t rank = read_u64(is);
    if (rank != 2) throw IoError("unsupported parameter rank in " + path);
    const uint64_t rows = read_u64(is);
    const uint64_t cols = read_u64(is);
    if (!is) throw IoError("truncated checkpoint: " + path);
    Matrix& v = store.create(name, Eigen::Index(rows), Eigen::Index(cols));
    for (uint64_t i = 0; i < rows; ++i) {
      for (uint64_t j = 0; j < cols; ++j) {
        v(Eigen::Index(i), Eigen::Index(j)) = double(read_f32(is));
      }
    }
    if (!is) throw IoError("truncated checkpoint: " + path);
  }
  return store;
}

void validate_same_layout(const ParamStore& loaded,
                          const ParamStore& expected) {
  if (loaded.size() != expected.size()) {
    throw CheckpointMismatch("checkpoint holds " +
                             std::to_string(loaded.size()) +
                             " parameters, config expects " +
                             std::to_string(expected.size()));
  }
  for (const auto& [name, e] : expected.entries()) {
    if (!loaded.has(name)) {
      throw CheckpointMismatch("checkpoint lacks parameter: " + name);
    }
    const Matrix& v = loaded.value(name);
    if (v.rows() != e.value.rows() || v.cols() != e.value.cols()) {
      throw CheckpointMismatch("checkpoint shape mismatch for: " + name);
    }
  }
}

}  // namespace dpdn::tensor
