#pragma once

#include <map>
#include <string>

#include "dpdn/rng.hpp"
#include "dpdn/tensor.hpp"

namespace dpdn::tensor {

// Named trainable parameters plus their ADAM moment buffers. The only
// mutation point in the library; everything else is pure.
class ParamStore {
 public:
  struct Entry {
    Matrix value;
    Matrix m;
    Matrix v;
  };

  Matrix& create(const std::string& name, Eigen::Index rows,
                 Eigen::Index cols);
  // Uniform init in [-sqrt(1/fan_in), +sqrt(1/fan_in)], RNG derived from
  // (seed, name) so creation order does not matter.
  Matrix& create_uniform(const std::string& name, Eigen::Index rows,
                         Eigen::Index cols, Eigen::Index fan_in,
                         uint64_t seed);

  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  const Matrix& value(const std::string& name) const;
  Matrix& value(const std::string& name);
  long step() const { return step_; }
  size_t size() const { return entries_.size(); }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  friend void adam_step(ParamStore&, const GradientMap&, double, double,
                        double, double);

 private:
  std::map<std::string, Entry> entries_;
  long step_ = 0;
};

// Bias-corrected ADAM update over every parameter in the store; grads must
// cover them all with matching shapes. Increments the step counter by one.
void adam_step(ParamStore& store, const GradientMap& grads, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Tape leaf bound to a stored parameter value.
Tensor use_param(Tape& tape, const ParamStore& store, const std::string& name);

// Convenience wrapper over Tape::backward that reports a gradient for every
// parameter in the store; parameters the loss does not depend on come back
// zero and flagged in `disconnected`.
GradientMap backward(Tape& tape, const Tensor& loss, const ParamStore& store,
                     double seed_weight = 1.0);

// Checkpoint file: "DPDN" magic, u32 format version, then one record per
// parameter (u64 name length, name bytes, u64 rank, dims as u64, float32
// little-endian row-major payload). Records are name-ordered; round trips
// are bit-exact.
void save_checkpoint(const ParamStore& store, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

// CheckpointMismatch unless both stores hold identical names and shapes.
void validate_same_layout(const ParamStore& loaded, const ParamStore& expected);

}  // namespace dpdn::tensor
