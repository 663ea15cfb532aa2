#include "msnerf/geometry.hpp"

#include "msnerf/error.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace msnerf {

namespace {

constexpr double kSmallAngle = 1e-8;
// Below this angle the Jacobian coefficients use their Taylor series.
constexpr double kSeriesAngle = 1e-3;

struct RodriguesCoefficients {
  double a;  // sin θ / θ
  double b;  // (1 - cos θ) / θ²
};

RodriguesCoefficients coefficients(double theta) {
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    return {1.0 - t2 / 6.0, 0.5 - t2 / 24.0};
  }
  const double half = std::sin(0.5 * theta) / theta;
  return {std::sin(theta) / theta, 2.0 * half * half};
}

void check_finite(const Vec3& v, const char* what) {
  if (!v.allFinite()) {
    throw std::invalid_argument(std::string(what) + " must be finite");
  }
}

}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<  0.0,   -v.z(),  v.y(),
        v.z(),  0.0,   -v.x(),
       -v.y(),  v.x(),  0.0;
  // clang-format on
  return s;
}

Mat3 rodrigues_to_matrix(const RotationVec& rv) {
  check_finite(rv.r, "rotation vector");
  const double theta = rv.r.norm();
  const auto [a, b] = coefficients(theta);
  const Mat3 k = skew(rv.r);
  return Mat3::Identity() + a * k + b * k * k;
}

std::array<Mat3, 3> rodrigues_jacobian(const RotationVec& rv) {
  check_finite(rv.r, "rotation vector");
  const Vec3& r = rv.r;
  const double theta = r.norm();
  const double t2 = theta * theta;
  const auto [a, b] = coefficients(theta);

  // (dA/dθ)/θ and (dB/dθ)/θ, so that dA/dr_k = da * r_k.
  double da = 0.0;
  double db = 0.0;
  if (theta < kSeriesAngle) {
    da = -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0;
    db = -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0;
  } else {
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    da = (theta * c - s) / (t2 * theta);
    db = (theta * s - 2.0 * (1.0 - c)) / (t2 * t2);
  }

  const Mat3 k = skew(r);
  const Mat3 k2 = k * k;
  std::array<Mat3, 3> out;
  for (int i = 0; i < 3; ++i) {
    const Mat3 e = skew(Vec3::Unit(i));
    out[i] = da * r[i] * k + a * e + db * r[i] * k2 + b * (e * k + k * e);
  }
  return out;
}

double rotation_angle(const Mat3& rotation) {
  const Vec3 v(rotation(2, 1) - rotation(1, 2), rotation(0, 2) - rotation(2, 0),
               rotation(1, 0) - rotation(0, 1));
  return std::atan2(0.5 * v.norm(), 0.5 * (rotation.trace() - 1.0));
}

RotationVec matrix_to_rotation_vec(const Mat3& rotation) {
  const Vec3 v(rotation(2, 1) - rotation(1, 2), rotation(0, 2) - rotation(2, 0),
               rotation(1, 0) - rotation(0, 1));
  const double sin_theta = 0.5 * v.norm();
  const double cos_theta = 0.5 * (rotation.trace() - 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);
  if (theta < 1e-6) {
    // θ/sin θ ≈ 1 + θ²/6
    return {0.5 * (1.0 + theta * theta / 6.0) * v};
  }
  if (M_PI - theta > 1e-6) {
    return {0.5 * theta / sin_theta * v};
  }
  // Near a half turn: the axis comes from the symmetric part R ≈ 2aaᵀ - I.
  const Mat3 sym = 0.5 * (rotation + Mat3::Identity());
  int col = 0;
  sym.diagonal().maxCoeff(&col);
  Vec3 axis = sym.col(col) / std::sqrt(std::max(sym(col, col), 1e-300));
  axis.normalize();
  if (axis.dot(v) < 0.0) axis = -axis;
  return {theta * axis};
}

Mat3 PoseSE3::rotation_matrix() const { return rodrigues_to_matrix(rotation); }

void CameraIntrinsics::validate() const {
  if (!(focal > 0.0) || !std::isfinite(focal)) {
    throw std::invalid_argument("focal length must be positive");
  }
  if (width < 1 || height < 1) {
    throw std::invalid_argument("image dimensions must be at least 1x1");
  }
}

Vec3 pose_to_world(const PoseSE3& pose, const Vec3& p_cam) {
  return pose.rotation_matrix() * p_cam + pose.translation;
}

namespace {

Vec3 camera_direction(const CameraIntrinsics& intr, PixelCoord pixel) {
  return {(pixel.u - intr.cx()) / intr.focal, -(pixel.v - intr.cy()) / intr.focal,
          -1.0};
}

void check_pixel(const CameraIntrinsics& intr, PixelCoord pixel) {
  if (!(pixel.u >= 0.0 && pixel.u < intr.width && pixel.v >= 0.0 &&
        pixel.v < intr.height)) {
    std::ostringstream msg;
    msg << "pixel (" << pixel.u << ", " << pixel.v << ") outside " << intr.width
        << "x" << intr.height << " image";
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace

Ray generate_ray(const CameraIntrinsics& intr, const PoseSE3& pose,
                 PixelCoord pixel, DepthBounds bounds) {
  intr.validate();
  check_pixel(intr, pixel);
  if (!(bounds.near > 0.0 && bounds.near < bounds.far)) {
    throw std::invalid_argument("depth bounds must satisfy 0 < near < far");
  }
  Ray ray;
  ray.origin = pose.translation;
  ray.direction = (pose.rotation_matrix() * camera_direction(intr, pixel)).normalized();
  ray.near = bounds.near;
  ray.far = bounds.far;
  return ray;
}

std::optional<PixelCoord> project(const CameraIntrinsics& intr,
                                  const PoseSE3& pose, const Vec3& world) {
  const Vec3 p = pose.rotation_matrix().transpose() * (world - pose.translation);
  if (!(p.z() < 0.0)) return std::nullopt;
  const double inv_depth = 1.0 / -p.z();
  return PixelCoord{intr.cx() + intr.focal * p.x() * inv_depth,
                    intr.cy() - intr.focal * p.y() * inv_depth};
}

CameraGradient ray_backward(const CameraIntrinsics& intr, const PoseSE3& pose,
                            PixelCoord pixel, const Vec3& grad_origin,
                            const Vec3& grad_direction) {
  const Mat3 rot = pose.rotation_matrix();
  const Vec3 q = camera_direction(intr, pixel);
  const Vec3 w = rot * q;
  const double norm = w.norm();
  const Vec3 d = w / norm;
  const Vec3 grad_w = (grad_direction - d * d.dot(grad_direction)) / norm;

  CameraGradient g;
  g.translation = grad_origin;
  const auto jac = rodrigues_jacobian(pose.rotation);
  for (int k = 0; k < 3; ++k) g.rotation[k] = grad_w.dot(jac[k] * q);

  const Vec3 grad_q = rot.transpose() * grad_w;
  const double f2 = intr.focal * intr.focal;
  g.focal = grad_q.x() * -(pixel.u - intr.cx()) / f2 +
            grad_q.y() * (pixel.v - intr.cy()) / f2;
  return g;
}

const char* rig_view_name(int view) {
  static constexpr const char* kNames[kRigViews] = {"bottom", "center", "left",
                                                    "right", "top"};
  if (view < 0 || view >= kRigViews) return "unknown";
  return kNames[view];
}

int parse_rig_view(const std::string& name) {
  for (int v = 0; v < kRigViews; ++v) {
    if (name == rig_view_name(v) || name == std::to_string(v)) return v;
  }
  throw std::invalid_argument("unknown rig view '" + name + "'");
}

std::array<PoseSE3, kRigViews> rig_layout(double baseline) {
  if (!(baseline > 0.0)) throw std::invalid_argument("baseline must be positive");
  std::array<PoseSE3, kRigViews> poses{};
  poses[static_cast<int>(RigView::Bottom)].translation = {0.0, -baseline, 0.0};
  poses[static_cast<int>(RigView::Center)].translation = {0.0, 0.0, 0.0};
  poses[static_cast<int>(RigView::Left)].translation = {-baseline, 0.0, 0.0};
  poses[static_cast<int>(RigView::Right)].translation = {baseline, 0.0, 0.0};
  poses[static_cast<int>(RigView::Top)].translation = {0.0, baseline, 0.0};
  return poses;
}

PoseSE3 compose(const PoseSE3& a, const PoseSE3& b) {
  const Mat3 ra = a.rotation_matrix();
  PoseSE3 out;
  out.rotation = matrix_to_rotation_vec(ra * b.rotation_matrix());
  out.translation = ra * b.translation + a.translation;
  return out;
}

PoseSE3 inverse(const PoseSE3& pose) {
  const Mat3 rt = pose.rotation_matrix().transpose();
  PoseSE3 out;
  out.rotation.r = -pose.rotation.r;
  out.translation = -(rt * pose.translation);
  return out;
}

std::vector<CameraRecord> read_pose_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pose file " + path);
  std::vector<CameraRecord> cams;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    CameraRecord rec;
    Vec3& r = rec.pose.rotation.r;
    Vec3& n = rec.pose.translation;
    if (!(ls >> rec.id >> r.x() >> r.y() >> r.z() >> n.x() >> n.y() >> n.z() >>
          rec.focal)) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected 'id rx ry rz nx ny nz focal'");
    }
    cams.push_back(rec);
  }
  return cams;
}

void write_pose_file(const std::string& path,
                     const std::vector<CameraRecord>& cameras) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write pose file " + path);
  out << "# id rx ry rz nx ny nz focal\n" << std::setprecision(17);
  for (const auto& c : cameras) {
    const Vec3& r = c.pose.rotation.r;
    const Vec3& n = c.pose.translation;
    out << c.id << ' ' << r.x() << ' ' << r.y() << ' ' << r.z() << ' ' << n.x()
        << ' ' << n.y() << ' ' << n.z() << ' ' << c.focal << '\n';
  }
  if (!out) throw DataError("failed writing pose file " + path);
}

}  // namespace msnerf
