#include "bevloc/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "bevloc/util.hpp"

namespace bevloc::nn {

void Linear::InitHeNormal(std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / in_dim));
  for (auto& w : weight.value.v) w = dist(rng);
  bias.value.Zero();
}

void Linear::InitZero() {
  weight.value.Zero();
  bias.value.Zero();
}

Eigen::VectorXd Linear::Forward(const Eigen::VectorXd& x) const {
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
      weight.value.v.data(), out_dim, in_dim);
  Eigen::Map<const Eigen::VectorXd> b(bias.value.v.data(), out_dim);
  return w * x + b;
}

Eigen::VectorXd Linear::Backward(const Eigen::VectorXd& x, const Eigen::VectorXd& dy) {
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
      weight.value.v.data(), out_dim, in_dim);
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw(
      weight.grad.v.data(), out_dim, in_dim);
  Eigen::Map<Eigen::VectorXd> gb(bias.grad.v.data(), out_dim);
  gw.noalias() += dy * x.transpose();
  gb += dy;
  return w.transpose() * dy;
}

void Conv2d::InitHeNormal(std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (in_c * 9.0)));
  for (auto& w : weight.value.v) w = dist(rng);
  bias.value.Zero();
}

Tensor Conv2d::Forward(const Tensor& x) const {
  const int h = x.shape[1], w = x.shape[2];
  const int oh = h / 2, ow = w / 2;
  Tensor out({out_c, oh, ow});
  for (int o = 0; o < out_c; ++o) {
    const double b = bias.value.v[o];
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = b;
        for (int ic = 0; ic < in_c; ++ic) {
          const double* wk = &weight.value.v[((static_cast<size_t>(o) * in_c + ic) * 3) * 3];
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = 2 * oy + ky - 1;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = 2 * ox + kx - 1;
              if (ix < 0 || ix >= w) continue;
              acc += wk[ky * 3 + kx] * x.At(ic, iy, ix);
            }
          }
        }
        out.At(o, oy, ox) = acc;
      }
    }
  }
  return out;
}

Tensor Conv2d::Backward(const Tensor& x, const Tensor& dy) {
  const int h = x.shape[1], w = x.shape[2];
  const int oh = dy.shape[1], ow = dy.shape[2];
  Tensor dx({in_c, h, w});
  for (int o = 0; o < out_c; ++o) {
    double gb = 0.0;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) gb += dy.At(o, oy, ox);
    bias.grad.v[o] += gb;
    for (int ic = 0; ic < in_c; ++ic) {
      const double* wk = &weight.value.v[((static_cast<size_t>(o) * in_c + ic) * 3) * 3];
      double* gw = &weight.grad.v[((static_cast<size_t>(o) * in_c + ic) * 3) * 3];
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const double g = dy.At(o, oy, ox);
          if (g == 0.0) continue;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = 2 * oy + ky - 1;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = 2 * ox + kx - 1;
              if (ix < 0 || ix >= w) continue;
              gw[ky * 3 + kx] += g * x.At(ic, iy, ix);
              dx.At(ic, iy, ix) += g * wk[ky * 3 + kx];
            }
          }
        }
      }
    }
  }
  return dx;
}

Tensor Relu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.v) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor ReluBackward(const Tensor& post_activation, const Tensor& dy) {
  Tensor dx = dy;
  for (size_t i = 0; i < dx.v.size(); ++i)
    if (post_activation.v[i] <= 0.0) dx.v[i] = 0.0;
  return dx;
}

void AdamW::ZeroGrad() {
  for (auto& g : groups_)
    for (auto* p : g.params) p->ZeroGrad();
}

void AdamW::Step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  size_t slot = 0;
  for (auto& g : groups_) {
    for (auto* p : g.params) {
      Tensor& m = moments1_[slot];
      Tensor& v = moments2_[slot];
      ++slot;
      for (size_t i = 0; i < p->value.v.size(); ++i) {
        const double grad = p->grad.v[i];
        m.v[i] = beta1_ * m.v[i] + (1.0 - beta1_) * grad;
        v.v[i] = beta2_ * v.v[i] + (1.0 - beta2_) * grad * grad;
        const double mh = m.v[i] / bc1;
        const double vh = v.v[i] / bc2;
        p->value.v[i] -= g.lr * (mh / (std::sqrt(vh) + eps_) + weight_decay_ * p->value.v[i]);
      }
    }
  }
}

namespace {
constexpr char kMagic[4] = {'B', 'V', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
void WriteRaw(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T ReadRaw(std::ifstream& in) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("truncated checkpoint");
  return value;
}
}  // namespace

void SaveCheckpoint(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(kMagic, 4);
  WriteRaw(out, kVersion);
  WriteRaw(out, static_cast<uint64_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    WriteRaw(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    WriteRaw(out, static_cast<uint32_t>(tensor->shape.size()));
    for (int d : tensor->shape) WriteRaw(out, static_cast<int64_t>(d));
    out.write(reinterpret_cast<const char*>(tensor->v.data()),
              static_cast<std::streamsize>(tensor->v.size() * sizeof(double)));
  }
}

std::map<std::string, Tensor> LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  const uint32_t version = ReadRaw<uint32_t>(in);
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version");
  const uint64_t count = ReadRaw<uint64_t>(in);
  std::map<std::string, Tensor> out;
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = ReadRaw<uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint32_t ndim = ReadRaw<uint32_t>(in);
    std::vector<int> shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int>(ReadRaw<int64_t>(in));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

uint64_t HashCheckpointNamespace(const std::map<std::string, Tensor>& tensors,
                                 const std::string& prefix) {
  uint64_t h = 14695981039346656037ull;
  for (const auto& [name, tensor] : tensors) {
    if (name.rfind(prefix, 0) != 0) continue;
    h = Fnv1a(name, h);
    for (int d : tensor.shape) h = Fnv1a(&d, sizeof(d), h);
    h = Fnv1a(tensor.v.data(), tensor.v.size() * sizeof(double), h);
  }
  return h;
}

}  // namespace bevloc::nn
