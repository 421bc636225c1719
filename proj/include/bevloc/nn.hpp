#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace bevloc::nn {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) { v.assign(Size(), 0.0); }

  int64_t Size() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }
  // [C,H,W] accessor
  double& At(int c, int y, int x) {
    return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  double At(int c, int y, int x) const {
    return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  void Zero() { std::fill(v.begin(), v.end(), 0.0); }
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> shape) : name(std::move(n)), value(shape), grad(shape) {}
  void ZeroGrad() { grad.Zero(); }
};

struct Linear {
  Parameter weight;  // [out, in]
  Parameter bias;    // [out]
  int in_dim = 0, out_dim = 0;

  Linear() = default;
  Linear(const std::string& name, int in, int out)
      : weight(name + "/weight", {out, in}), bias(name + "/bias", {out}), in_dim(in), out_dim(out) {}

  void InitHeNormal(std::mt19937_64& rng);
  void InitZero();

  Eigen::VectorXd Forward(const Eigen::VectorXd& x) const;
  // Accumulates weight/bias grads; returns dL/dx.
  Eigen::VectorXd Backward(const Eigen::VectorXd& x, const Eigen::VectorXd& dy);
  void CollectParams(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

// 3x3 convolution, stride 2, padding 1: halves the spatial resolution.
struct Conv2d {
  Parameter weight;  // [out_c, in_c, 3, 3]
  Parameter bias;    // [out_c]
  int in_c = 0, out_c = 0;

  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels)
      : weight(name + "/weight", {out_channels, in_channels, 3, 3}),
        bias(name + "/bias", {out_channels}),
        in_c(in_channels),
        out_c(out_channels) {}

  void InitHeNormal(std::mt19937_64& rng);

  Tensor Forward(const Tensor& x) const;
  // Accumulates weight/bias grads; returns dL/dx.
  Tensor Backward(const Tensor& x, const Tensor& dy);
  void CollectParams(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

Tensor Relu(const Tensor& x);
// dy masked by the forward output (zero where the activation was clipped).
Tensor ReluBackward(const Tensor& post_activation, const Tensor& dy);

// Decoupled weight decay Adam with per-group step sizes.
class AdamW {
 public:
  struct Group {
    std::vector<Parameter*> params;
    double lr = 1e-3;
  };

  explicit AdamW(std::vector<Group> groups, double weight_decay = 0.0)
      : groups_(std::move(groups)), weight_decay_(weight_decay) {
    for (auto& g : groups_)
      for (auto* p : g.params) {
        moments1_.emplace_back(p->value.shape);
        moments2_.emplace_back(p->value.shape);
      }
  }

  void ZeroGrad();
  void Step();
  int64_t StepCount() const { return t_; }

 private:
  std::vector<Group> groups_;
  double weight_decay_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int64_t t_ = 0;
  std::vector<Tensor> moments1_, moments2_;
};

// Versioned named-tensor container.
void SaveCheckpoint(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, const Tensor*>>& tensors);
std::map<std::string, Tensor> LoadCheckpoint(const std::filesystem::path& path);

// Order-independent content hash of every entry whose name starts with prefix.
uint64_t HashCheckpointNamespace(const std::map<std::string, Tensor>& tensors,
                                 const std::string& prefix);

}  // namespace bevloc::nn
