#include "bevloc/splat.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace bevloc::splat {

namespace {

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::Matrix3d QuatToMatrix(double w, double x, double y, double z) {
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

// dR/dq for the normalized quaternion components, same layout as QuatToMatrix.
void QuatMatrixDerivatives(double w, double x, double y, double z, Eigen::Matrix3d d[4]) {
  d[0] << 0, -z, y, z, 0, -x, -y, x, 0;                    // dR/dw
  d[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;            // dR/dx
  d[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;            // dR/dy
  d[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;            // dR/dz
  for (int i = 0; i < 4; ++i) d[i] *= 2.0;
}

struct Projected {
  bool valid = false;
  double depth = 0.0;
  Eigen::Vector3d t = Eigen::Vector3d::Zero();       // camera-space mean
  Eigen::Vector2d proj = Eigen::Vector2d::Zero();    // pixel coordinates of the mean
  Eigen::Matrix2d cov2 = Eigen::Matrix2d::Zero();    // 2D covariance incl. floor
  Eigen::Matrix2d inv_cov = Eigen::Matrix2d::Zero();
  Eigen::Matrix3d cov_cam = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d cov_world = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();  // from the normalized quaternion
  Eigen::Vector4d quat_hat = Eigen::Vector4d::Zero(); // normalized (w,x,y,z)
  double quat_norm = 1.0;
  Eigen::Vector3d scale = Eigen::Vector3d::Ones();    // exp(log_scale)
  double opacity = 0.0;
  double q_cut = 0.0;                                 // Mahalanobis cutoff from kAlphaMin
  Eigen::Vector3d color = Eigen::Vector3d::Zero();    // clamped
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;               // inclusive pixel bbox
};

std::vector<Projected> ProjectAll(const GaussianScene& scene, const geom::CameraPose& pose) {
  const Eigen::Matrix3d world_to_cam = pose.WorldToCameraRotation();
  const double f = pose.intrinsics.focal_px;
  const double cx = pose.intrinsics.principal_point.x();
  const double cy = pose.intrinsics.principal_point.y();
  const int width = pose.intrinsics.width;
  const int height = pose.intrinsics.height;

  std::vector<Projected> out(scene.gaussians.size());
  for (size_t i = 0; i < scene.gaussians.size(); ++i) {
    const Gaussian3D& g = scene.gaussians[i];
    Projected& p = out[i];

    p.t = world_to_cam * (g.mean - pose.position);
    if (p.t.z() < kNearClip) continue;  // behind (or at) the camera: excluded
    p.depth = p.t.z();

    p.opacity = Sigmoid(g.opacity_logit);
    if (p.opacity <= kAlphaMin) continue;  // can never contribute

    const double tz = p.t.z();
    p.proj = Eigen::Vector2d(f * p.t.x() / tz + cx, f * p.t.y() / tz + cy);

    p.quat_norm = std::sqrt(g.rotation.w() * g.rotation.w() + g.rotation.x() * g.rotation.x() +
                            g.rotation.y() * g.rotation.y() + g.rotation.z() * g.rotation.z());
    if (!(p.quat_norm > 0.0)) throw std::invalid_argument("gaussian rotation has zero norm");
    p.quat_hat << g.rotation.w() / p.quat_norm, g.rotation.x() / p.quat_norm,
        g.rotation.y() / p.quat_norm, g.rotation.z() / p.quat_norm;
    p.rot = QuatToMatrix(p.quat_hat[0], p.quat_hat[1], p.quat_hat[2], p.quat_hat[3]);

    p.scale = g.log_scale.array().exp();
    p.cov_world = p.rot * p.scale.array().square().matrix().asDiagonal() * p.rot.transpose();
    p.cov_cam = world_to_cam * p.cov_world * world_to_cam.transpose();

    Eigen::Matrix<double, 2, 3> jac;
    jac << f / tz, 0.0, -f * p.t.x() / (tz * tz),
           0.0, f / tz, -f * p.t.y() / (tz * tz);
    p.cov2 = jac * p.cov_cam * jac.transpose();
    p.cov2(0, 0) += kCovarianceFloorPx2;
    p.cov2(1, 1) += kCovarianceFloorPx2;

    const double det = p.cov2(0, 0) * p.cov2(1, 1) - p.cov2(0, 1) * p.cov2(1, 0);
    if (!(det > 0.0) || !std::isfinite(det)) continue;
    p.inv_cov << p.cov2(1, 1) / det, -p.cov2(0, 1) / det, -p.cov2(1, 0) / det, p.cov2(0, 0) / det;

    p.q_cut = 2.0 * std::log(p.opacity / kAlphaMin);
    const double half_trace = 0.5 * (p.cov2(0, 0) + p.cov2(1, 1));
    const double disc = std::sqrt(std::max(0.0, half_trace * half_trace - det));
    const double lambda_max = half_trace + disc;
    const double radius = std::sqrt(std::max(0.0, p.q_cut * lambda_max));

    p.x0 = std::max(0, static_cast<int>(std::floor(p.proj.x() - radius - 0.5)));
    p.x1 = std::min(width - 1, static_cast<int>(std::ceil(p.proj.x() + radius - 0.5)));
    p.y0 = std::max(0, static_cast<int>(std::floor(p.proj.y() - radius - 0.5)));
    p.y1 = std::min(height - 1, static_cast<int>(std::ceil(p.proj.y() + radius - 0.5)));
    if (p.x0 > p.x1 || p.y0 > p.y1) continue;

    p.color = g.color.cwiseMax(0.0).cwiseMin(1.0);
    p.valid = true;
  }
  return out;
}

// Depth order with ties broken by Gaussian index.
std::vector<int> DepthOrder(const std::vector<Projected>& projected) {
  std::vector<int> order;
  order.reserve(projected.size());
  for (size_t i = 0; i < projected.size(); ++i)
    if (projected[i].valid) order.push_back(static_cast<int>(i));
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (projected[a].depth != projected[b].depth) return projected[a].depth < projected[b].depth;
    return a < b;
  });
  return order;
}

struct ForwardBuffers {
  std::vector<double> color;        // 3 per pixel, without background
  std::vector<double> transmittance;
  std::vector<double> alpha_accum;
  std::vector<int> last_contrib;    // index into the depth order, -1 if none
};

ForwardBuffers RunForward(const std::vector<Projected>& projected, const std::vector<int>& order,
                          int width, int height) {
  const size_t n_px = static_cast<size_t>(width) * height;
  ForwardBuffers fb;
  fb.color.assign(n_px * 3, 0.0);
  fb.transmittance.assign(n_px, 1.0);
  fb.alpha_accum.assign(n_px, 0.0);
  fb.last_contrib.assign(n_px, -1);

  for (size_t k = 0; k < order.size(); ++k) {
    const Projected& p = projected[order[k]];
    const double a00 = p.inv_cov(0, 0), a01 = p.inv_cov(0, 1), a11 = p.inv_cov(1, 1);
    for (int y = p.y0; y <= p.y1; ++y) {
      const double dy = y + 0.5 - p.proj.y();
      for (int x = p.x0; x <= p.x1; ++x) {
        const size_t idx = static_cast<size_t>(y) * width + x;
        double& T = fb.transmittance[idx];
        if (T < kTransmittanceMin) continue;
        const double dx = x + 0.5 - p.proj.x();
        const double q = a00 * dx * dx + 2.0 * a01 * dx * dy + a11 * dy * dy;
        if (q > p.q_cut) continue;
        const double alpha = std::min(kAlphaMax, p.opacity * std::exp(-0.5 * q));
        const double w = T * alpha;
        fb.color[idx * 3 + 0] += w * p.color[0];
        fb.color[idx * 3 + 1] += w * p.color[1];
        fb.color[idx * 3 + 2] += w * p.color[2];
        fb.alpha_accum[idx] += w;
        T *= 1.0 - alpha;
        fb.last_contrib[idx] = static_cast<int>(k);
      }
    }
  }
  return fb;
}

void BackwardPass(const GaussianScene& scene, const geom::CameraPose& pose,
                  const std::vector<Projected>& projected, const std::vector<int>& order,
                  const ForwardBuffers& fb, const Image& upstream,
                  std::vector<GaussianGrads>& grads) {
  const int width = pose.intrinsics.width;
  const int height = pose.intrinsics.height;
  const size_t n_px = static_cast<size_t>(width) * height;
  const Eigen::Matrix3d world_to_cam = pose.WorldToCameraRotation();
  const double f = pose.intrinsics.focal_px;

  // Per-pixel running state for the reverse sweep: color composited behind the
  // current contributor (incl. background) and the transmittance after it.
  std::vector<double> behind(n_px * 3);
  for (size_t i = 0; i < n_px; ++i)
    for (int c = 0; c < 3; ++c) behind[i * 3 + c] = scene.background[c];
  std::vector<double> t_after = fb.transmittance;

  for (int k = static_cast<int>(order.size()) - 1; k >= 0; --k) {
    const int gi = order[k];
    const Projected& p = projected[gi];
    const Gaussian3D& g = scene.gaussians[gi];
    const double a00 = p.inv_cov(0, 0), a01 = p.inv_cov(0, 1), a11 = p.inv_cov(1, 1);

    double gu = 0.0, gv = 0.0;           // dL/d proj
    double ga00 = 0.0, ga01 = 0.0, ga11 = 0.0;  // dL/d inv_cov entries
    double gop = 0.0;
    Eigen::Vector3d gcolor = Eigen::Vector3d::Zero();

    for (int y = p.y0; y <= p.y1; ++y) {
      const double dy = y + 0.5 - p.proj.y();
      for (int x = p.x0; x <= p.x1; ++x) {
        const size_t idx = static_cast<size_t>(y) * width + x;
        if (fb.last_contrib[idx] < k) continue;
        const double dx = x + 0.5 - p.proj.x();
        const double q = a00 * dx * dx + 2.0 * a01 * dx * dy + a11 * dy * dy;
        if (q > p.q_cut) continue;

        const double gauss = std::exp(-0.5 * q);
        const double alpha_raw = p.opacity * gauss;
        const bool clamped = alpha_raw > kAlphaMax;
        const double alpha = clamped ? kAlphaMax : alpha_raw;

        const double t_before = t_after[idx] / (1.0 - alpha);
        const double* gpix = &upstream.data[idx * 3];
        double* b = &behind[idx * 3];

        gcolor[0] += alpha * t_before * gpix[0];
        gcolor[1] += alpha * t_before * gpix[1];
        gcolor[2] += alpha * t_before * gpix[2];

        if (!clamped) {
          const double gl_alpha = t_before * ((p.color[0] - b[0]) * gpix[0] +
                                              (p.color[1] - b[1]) * gpix[1] +
                                              (p.color[2] - b[2]) * gpix[2]);
          gop += gl_alpha * gauss;
          const double gq = -0.5 * gl_alpha * p.opacity * gauss;
          ga00 += gq * dx * dx;
          ga01 += gq * dx * dy;
          ga11 += gq * dy * dy;
          const double gdx = gq * 2.0 * (a00 * dx + a01 * dy);
          const double gdy = gq * 2.0 * (a01 * dx + a11 * dy);
          gu -= gdx;
          gv -= gdy;
        } else {
          // Opacity saturated: only the color path carries gradient.
        }

        b[0] = alpha * p.color[0] + (1.0 - alpha) * b[0];
        b[1] = alpha * p.color[1] + (1.0 - alpha) * b[1];
        b[2] = alpha * p.color[2] + (1.0 - alpha) * b[2];
        t_after[idx] = t_before;
      }
    }

    GaussianGrads& out = grads[gi];

    for (int c = 0; c < 3; ++c) {
      const bool inside = g.color[c] >= 0.0 && g.color[c] <= 1.0;
      out.color[c] += inside ? gcolor[c] : 0.0;
    }
    out.opacity_logit += gop * p.opacity * (1.0 - p.opacity);

    Eigen::Matrix2d g_invcov;
    g_invcov << ga00, ga01, ga01, ga11;
    const Eigen::Matrix2d g_cov2 = -p.inv_cov * g_invcov * p.inv_cov;

    const double tz = p.t.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << f / tz, 0.0, -f * p.t.x() / (tz * tz),
           0.0, f / tz, -f * p.t.y() / (tz * tz);

    const Eigen::Matrix3d g_cov_cam = jac.transpose() * g_cov2 * jac;
    const Eigen::Matrix<double, 2, 3> g_jac = 2.0 * g_cov2 * jac * p.cov_cam;

    Eigen::Vector3d g_t = Eigen::Vector3d::Zero();
    const double inv_tz2 = 1.0 / (tz * tz);
    const double inv_tz3 = inv_tz2 / tz;
    g_t.x() += g_jac(0, 2) * (-f * inv_tz2) + gu * (f / tz);
    g_t.y() += g_jac(1, 2) * (-f * inv_tz2) + gv * (f / tz);
    g_t.z() += (g_jac(0, 0) + g_jac(1, 1)) * (-f * inv_tz2) +
               g_jac(0, 2) * (2.0 * f * p.t.x() * inv_tz3) +
               g_jac(1, 2) * (2.0 * f * p.t.y() * inv_tz3) +
               gu * (-f * p.t.x() * inv_tz2) + gv * (-f * p.t.y() * inv_tz2);

    out.mean += world_to_cam.transpose() * g_t;

    const Eigen::Matrix3d g_cov_world =
        world_to_cam.transpose() * g_cov_cam * world_to_cam;
    const Eigen::Vector3d scale_sq = p.scale.array().square();
    const Eigen::Matrix3d g_rot = 2.0 * g_cov_world * p.rot * scale_sq.asDiagonal();
    const Eigen::Matrix3d rtgr = p.rot.transpose() * g_cov_world * p.rot;
    for (int a = 0; a < 3; ++a) out.log_scale[a] += rtgr(a, a) * 2.0 * scale_sq[a];

    Eigen::Matrix3d dquat[4];
    QuatMatrixDerivatives(p.quat_hat[0], p.quat_hat[1], p.quat_hat[2], p.quat_hat[3], dquat);
    Eigen::Vector4d g_qhat;
    for (int m = 0; m < 4; ++m) g_qhat[m] = (g_rot.array() * dquat[m].array()).sum();
    const Eigen::Vector4d q_raw_grad =
        (g_qhat - p.quat_hat * p.quat_hat.dot(g_qhat)) / p.quat_norm;
    out.rotation += q_raw_grad;
  }
}

Image AssembleImage(const ForwardBuffers& fb, const GaussianScene& scene, int width, int height) {
  Image img(width, height);
  const size_t n_px = static_cast<size_t>(width) * height;
  for (size_t i = 0; i < n_px; ++i) {
    const double T = fb.transmittance[i];
    for (int c = 0; c < 3; ++c) img.data[i * 3 + c] = fb.color[i * 3 + c] + T * scene.background[c];
  }
  return img;
}

}  // namespace

void Gaussian3D::Validate() const {
  if (std::abs(rotation.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("gaussian: rotation must be unit norm");
  for (int i = 0; i < 3; ++i) {
    const double s = std::exp(log_scale[i]);
    if (!(std::isfinite(s) && s > 0.0))
      throw std::invalid_argument("gaussian: exp(log_scale) must be finite and positive");
  }
}

Image Render(const GaussianScene& scene, const geom::CameraPose& pose) {
  pose.Validate();
  const auto projected = ProjectAll(scene, pose);
  const auto order = DepthOrder(projected);
  const auto fb = RunForward(projected, order, pose.intrinsics.width, pose.intrinsics.height);
  return AssembleImage(fb, scene, pose.intrinsics.width, pose.intrinsics.height);
}

RenderResult RenderDetailed(const GaussianScene& scene, const geom::CameraPose& pose) {
  pose.Validate();
  const auto projected = ProjectAll(scene, pose);
  const auto order = DepthOrder(projected);
  auto fb = RunForward(projected, order, pose.intrinsics.width, pose.intrinsics.height);
  RenderResult result;
  result.image = AssembleImage(fb, scene, pose.intrinsics.width, pose.intrinsics.height);
  result.transmittance = std::move(fb.transmittance);
  result.alpha_accum = std::move(fb.alpha_accum);
  return result;
}

std::vector<GaussianGrads> RenderGradients(const GaussianScene& scene,
                                           const geom::CameraPose& pose,
                                           const Image& loss_image_grad) {
  pose.Validate();
  if (loss_image_grad.width != pose.intrinsics.width ||
      loss_image_grad.height != pose.intrinsics.height)
    throw std::invalid_argument("loss gradient image does not match the render resolution");
  const auto projected = ProjectAll(scene, pose);
  const auto order = DepthOrder(projected);
  const auto fb = RunForward(projected, order, pose.intrinsics.width, pose.intrinsics.height);
  std::vector<GaussianGrads> grads(scene.gaussians.size());
  BackwardPass(scene, pose, projected, order, fb, loss_image_grad, grads);
  return grads;
}

namespace {

// Parameters flattened per Gaussian: mean(3) log_scale(3) quat wxyz(4)
// opacity_logit(1) color(3).
constexpr int kParamsPerGaussian = 14;

void FlattenGrads(const std::vector<GaussianGrads>& grads, std::vector<double>& out) {
  out.assign(grads.size() * kParamsPerGaussian, 0.0);
  for (size_t i = 0; i < grads.size(); ++i) {
    double* p = &out[i * kParamsPerGaussian];
    for (int a = 0; a < 3; ++a) p[a] = grads[i].mean[a];
    for (int a = 0; a < 3; ++a) p[3 + a] = grads[i].log_scale[a];
    for (int a = 0; a < 4; ++a) p[6 + a] = grads[i].rotation[a];
    p[10] = grads[i].opacity_logit;
    for (int a = 0; a < 3; ++a) p[11 + a] = grads[i].color[a];
  }
}

void ApplyStep(GaussianScene& scene, const std::vector<double>& direction,
               const std::vector<double>& group_step) {
  for (size_t i = 0; i < scene.gaussians.size(); ++i) {
    Gaussian3D& g = scene.gaussians[i];
    const double* d = &direction[i * kParamsPerGaussian];
    for (int a = 0; a < 3; ++a) g.mean[a] -= group_step[0] * d[a];
    for (int a = 0; a < 3; ++a) g.log_scale[a] -= group_step[1] * d[3 + a];
    Eigen::Vector4d q(g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z());
    for (int a = 0; a < 4; ++a) q[a] -= group_step[2] * d[6 + a];
    const double n = q.norm();
    if (n > 0.0) q /= n;
    g.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
    g.opacity_logit -= group_step[3] * d[10];
    for (int a = 0; a < 3; ++a) g.color[a] -= group_step[4] * d[11 + a];
    // Projection: keep means inside the bounds and colors renderable.
    g.mean = scene.bounds.Clamp(g.mean);
    g.color = g.color.cwiseMax(0.0).cwiseMin(1.0);
  }
}

double DatasetLoss(const GaussianScene& scene, const std::vector<Image>& frames,
                   const std::vector<geom::CameraPose>& poses) {
  double total = 0.0;
  for (size_t f = 0; f < frames.size(); ++f) {
    const Image rendered = Render(scene, poses[f]);
    total += MeanAbsDifference(rendered, frames[f]);
  }
  return total / frames.size();
}

// One combined pass: mean-L1 loss over all frames plus its gradient.
double DatasetLossAndGrads(const GaussianScene& scene, const std::vector<Image>& frames,
                           const std::vector<geom::CameraPose>& poses,
                           std::vector<GaussianGrads>& grads) {
  grads.assign(scene.gaussians.size(), GaussianGrads{});
  double total = 0.0;
  for (size_t f = 0; f < frames.size(); ++f) {
    const geom::CameraPose& pose = poses[f];
    const auto projected = ProjectAll(scene, pose);
    const auto order = DepthOrder(projected);
    const auto fb = RunForward(projected, order, pose.intrinsics.width, pose.intrinsics.height);
    const Image rendered = AssembleImage(fb, scene, pose.intrinsics.width, pose.intrinsics.height);

    const double denom = static_cast<double>(rendered.data.size()) * frames.size();
    Image upstream(rendered.width, rendered.height);
    double frame_loss = 0.0;
    for (size_t i = 0; i < rendered.data.size(); ++i) {
      const double diff = rendered.data[i] - frames[f].data[i];
      frame_loss += std::abs(diff);
      upstream.data[i] = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) / denom;
    }
    total += frame_loss / rendered.data.size();
    BackwardPass(scene, pose, projected, order, fb, upstream, grads);
  }
  return total / frames.size();
}

Aabb DeriveBounds(const std::vector<geom::CameraPose>& poses) {
  // Least-squares intersection point of the optical axes.
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  for (const auto& pose : poses) {
    const Eigen::Vector3d d = pose.ViewDirection();
    const Eigen::Matrix3d m = Eigen::Matrix3d::Identity() - d * d.transpose();
    a += m;
    b += m * pose.position;
  }
  const Eigen::Vector3d center = a.fullPivLu().solve(b);
  std::vector<double> dists;
  dists.reserve(poses.size());
  for (const auto& pose : poses) dists.push_back((pose.position - center).norm());
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  const double e = 0.55 * dists[dists.size() / 2];
  Aabb box;
  box.min = center - Eigen::Vector3d(e, e, 0.4 * e);
  box.max = center + Eigen::Vector3d(e, e, 0.6 * e);
  return box;
}

Eigen::Vector3d MedianColor(const std::vector<Image>& frames) {
  Eigen::Vector3d med;
  std::vector<double> vals;
  for (int c = 0; c < 3; ++c) {
    vals.clear();
    for (const auto& f : frames)
      for (size_t p = 0; p < f.NumPixels(); ++p) vals.push_back(f.data[p * 3 + c]);
    std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
    med[c] = vals[vals.size() / 2];
  }
  return med;
}

}  // namespace

FitResult FitScene(const std::vector<Image>& frames, const std::vector<geom::CameraPose>& poses,
                   const FitConfig& config) {
  if (frames.size() < 2) throw std::invalid_argument("fit_scene: insufficient views (need >= 2 frames)");
  if (frames.size() != poses.size())
    throw std::invalid_argument("fit_scene: frame and pose counts differ");
  if (config.n_gaussians < 1) throw std::invalid_argument("fit_scene: n_gaussians must be >= 1");
  for (size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].width != poses[i].intrinsics.width ||
        frames[i].height != poses[i].intrinsics.height)
      throw std::invalid_argument("fit_scene: frame size does not match pose intrinsics");
  }

  FitResult result;
  GaussianScene& scene = result.scene;
  scene.bounds = config.bounds ? *config.bounds : DeriveBounds(poses);
  scene.background = config.background ? *config.background : MedianColor(frames);

  const Eigen::Vector3d extent = scene.bounds.Extent();
  const double mean_extent = extent.mean();

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  scene.gaussians.resize(config.n_gaussians);
  for (auto& g : scene.gaussians) {
    for (int a = 0; a < 3; ++a)
      g.mean[a] = scene.bounds.min[a] + uni(rng) * extent[a];
    g.log_scale = Eigen::Vector3d::Constant(std::log(config.init_scale_fraction * mean_extent));
    g.rotation = Eigen::Quaterniond::Identity();
    g.opacity_logit = 0.0;
    for (int a = 0; a < 3; ++a) g.color[a] = 0.2 + 0.6 * uni(rng);
  }

  std::vector<GaussianGrads> grads;
  result.initial_loss = result.final_loss = DatasetLoss(scene, frames, poses);
  if (config.iters <= 0) return result;

  const size_t n_params = scene.gaussians.size() * kParamsPerGaussian;
  std::vector<double> flat_grads, m(n_params, 0.0), v(n_params, 0.0), direction(n_params, 0.0);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double step_factor = 1.0;
  double current_loss = result.initial_loss;

  for (int iter = 1; iter <= config.iters; ++iter) {
    const double loss = DatasetLossAndGrads(scene, frames, poses, grads);
    current_loss = loss;
    FlattenGrads(grads, flat_grads);

    const double bc1 = 1.0 - std::pow(beta1, iter);
    const double bc2 = 1.0 - std::pow(beta2, iter);
    for (size_t i = 0; i < n_params; ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * flat_grads[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * flat_grads[i] * flat_grads[i];
      direction[i] = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }

    bool accepted = false;
    double trial_loss = loss;
    for (int halving = 0; halving <= 10 && !accepted; ++halving) {
      const double s = config.step_size * step_factor / (1 << halving);
      const std::vector<double> group_step = {s * config.lr_mean * mean_extent,
                                              s * config.lr_log_scale, s * config.lr_rotation,
                                              s * config.lr_opacity, s * config.lr_color};
      GaussianScene trial = scene;
      ApplyStep(trial, direction, group_step);
      trial_loss = DatasetLoss(trial, frames, poses);
      if (trial_loss <= loss) {
        scene.gaussians = std::move(trial.gaussians);
        accepted = true;
        if (halving > 0) step_factor /= (1 << halving);
      }
    }
    if (accepted) {
      current_loss = trial_loss;
      step_factor = std::min(1.0, step_factor * 1.5);
    } else {
      // Keep the parameters (loss unchanged) and restart from a small step.
      step_factor = std::max(step_factor / 1024.0, 1e-9);
    }
    result.loss_history.push_back(current_loss);
  }
  result.final_loss = current_loss;
  return result;
}

BEVSequence VideoToBev(const std::vector<Image>& video_frames,
                       const std::vector<geom::CameraPose>& video_poses,
                       const FitConfig& fit_config, const BevConfig& bev_config,
                       geom::BevMode mode, FitResult* fit_result_out) {
  if (video_frames.empty()) throw std::invalid_argument("video_to_bev: empty video");
  FitResult fit = FitScene(video_frames, video_poses, fit_config);

  const int n = static_cast<int>(video_frames.size());
  const Aabb& bounds = fit.scene.bounds;
  const Eigen::Vector3d center =
      bev_config.center
          ? *bev_config.center
          : Eigen::Vector3d(bounds.Center().x(), bounds.Center().y(), bounds.min.z());

  double base_height = bev_config.base_height;
  if (base_height <= 0.0) {
    const double half_extent = 0.5 * std::max(bounds.Extent().x(), bounds.Extent().y());
    base_height = 1.15 * half_extent * 2.0 * bev_config.intrinsics.focal_px /
                  bev_config.intrinsics.width;
  }
  const double growth = bev_config.height_growth >= 0.0 ? bev_config.height_growth
                                                        : 0.02 * base_height;
  const double yaw_step = bev_config.yaw_step_deg >= 0.0 ? bev_config.yaw_step_deg : 360.0 / n;

  BEVSequence seq;
  seq.mode = mode;
  seq.crop_fraction = mode == geom::BevMode::kTrain ? bev_config.crop_fraction_train
                                                    : bev_config.crop_fraction_test;
  seq.poses = geom::BevPoseSequence(center, n, mode, base_height, growth, yaw_step,
                                    bev_config.intrinsics);
  seq.frames.reserve(n);
  for (const auto& pose : seq.poses) {
    Image frame = Render(fit.scene, pose);
    if (seq.crop_fraction < 1.0) {
      frame = ResizeBilinear(CenterCrop(frame, seq.crop_fraction), bev_config.intrinsics.width,
                             bev_config.intrinsics.height);
    }
    seq.frames.push_back(std::move(frame));
  }
  if (fit_result_out) *fit_result_out = std::move(fit);
  return seq;
}

void WriteSceneFile(const std::filesystem::path& path, const GaussianScene& scene) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "bevloc_scene 1 " << scene.gaussians.size() << "\n";
  char line[640];
  std::snprintf(line, sizeof(line), "background %.17g %.17g %.17g\n", scene.background[0],
                scene.background[1], scene.background[2]);
  out << line;
  std::snprintf(line, sizeof(line), "bounds %.17g %.17g %.17g %.17g %.17g %.17g\n",
                scene.bounds.min[0], scene.bounds.min[1], scene.bounds.min[2], scene.bounds.max[0],
                scene.bounds.max[1], scene.bounds.max[2]);
  out << line;
  for (const auto& g : scene.gaussians) {
    std::snprintf(line, sizeof(line),
                  "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g "
                  "%.17g\n",
                  g.mean[0], g.mean[1], g.mean[2], g.log_scale[0], g.log_scale[1], g.log_scale[2],
                  g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z(), g.opacity_logit,
                  g.color[0], g.color[1], g.color[2]);
    out << line;
  }
}

GaussianScene ReadSceneFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string magic;
  int version = 0;
  size_t count = 0;
  in >> magic >> version >> count;
  if (magic != "bevloc_scene" || version != 1)
    throw std::runtime_error("unrecognized scene file: " + path.string());
  GaussianScene scene;
  std::string key;
  in >> key >> scene.background[0] >> scene.background[1] >> scene.background[2];
  if (key != "background") throw std::runtime_error("scene file missing background");
  in >> key >> scene.bounds.min[0] >> scene.bounds.min[1] >> scene.bounds.min[2] >>
      scene.bounds.max[0] >> scene.bounds.max[1] >> scene.bounds.max[2];
  if (key != "bounds") throw std::runtime_error("scene file missing bounds");
  scene.gaussians.resize(count);
  for (auto& g : scene.gaussians) {
    double qw, qx, qy, qz;
    if (!(in >> g.mean[0] >> g.mean[1] >> g.mean[2] >> g.log_scale[0] >> g.log_scale[1] >>
          g.log_scale[2] >> qw >> qx >> qy >> qz >> g.opacity_logit >> g.color[0] >> g.color[1] >>
          g.color[2]))
      throw std::runtime_error("truncated scene file: " + path.string());
    g.rotation = Eigen::Quaterniond(qw, qx, qy, qz);
  }
  return scene;
}

}  // namespace bevloc::splat
