#pragma once

// Rigid poses in se(3) coordinates, the pinhole camera and ray generation.
//
// Camera convention, used everywhere in the project: camera space is
// right-handed with +x right, +y up and the optical axis along -z. Image
// space has u to the right and v downwards, pixel (i, j) covers
// [i, i+1) x [j, j+1) and its center is (i + 0.5, j + 0.5). The principal
// point sits at (width / 2, height / 2).

#include <Eigen/Core>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace msnerf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Axis-angle rotation: direction is the axis, norm is the angle in radians.
struct RotationVec {
  Vec3 r = Vec3::Zero();
};

// Camera-to-world rigid motion. Rotation is the rotation vector r, translation
// n is the camera center in world coordinates.
struct PoseSE3 {
  RotationVec rotation;
  Vec3 translation = Vec3::Zero();

  Mat3 rotation_matrix() const;
};

struct CameraIntrinsics {
  double focal = 1.0;  // pixels
  int width = 1;
  int height = 1;

  double cx() const { return 0.5 * width; }
  double cy() const { return 0.5 * height; }
  void validate() const;
};

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

struct DepthBounds {
  double near = 0.0;
  double far = 1.0;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = -Vec3::UnitZ();
  double near = 0.0;
  double far = 1.0;

  Vec3 at(double z) const { return origin + z * direction; }
};

// R = I + sin(θ)K + (1 - cos θ)K² with K the skew matrix of the unit axis.
// Throws std::invalid_argument on non-finite input.
Mat3 rodrigues_to_matrix(const RotationVec& r);

// dR/dr_k for k = 0, 1, 2 (exact, with a series expansion near θ = 0).
std::array<Mat3, 3> rodrigues_jacobian(const RotationVec& r);

// Inverse of rodrigues_to_matrix for angles in [0, π).
RotationVec matrix_to_rotation_vec(const Mat3& rotation);

// Angle in radians of the rotation R (robust for small angles).
double rotation_angle(const Mat3& rotation);

Mat3 skew(const Vec3& v);

Vec3 pose_to_world(const PoseSE3& pose, const Vec3& p_cam);

// Ray through subpixel coordinate (u, v). The direction is unit length and
// points along R · [(u - cx)/f, -(v - cy)/f, -1].
Ray generate_ray(const CameraIntrinsics& intr, const PoseSE3& pose,
                 PixelCoord pixel, DepthBounds bounds);

// Inverse camera mapping. Returns std::nullopt for points on or behind the
// camera plane. The image bounds are not checked.
std::optional<PixelCoord> project(const CameraIntrinsics& intr,
                                  const PoseSE3& pose, const Vec3& world);

// Gradient of a scalar with respect to the camera parameters of one ray.
struct CameraGradient {
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();
  double focal = 0.0;

  CameraGradient& operator+=(const CameraGradient& o) {
    rotation += o.rotation;
    translation += o.translation;
    focal += o.focal;
    return *this;
  }
};

// Back-propagates dL/d(origin) and dL/d(direction) of generate_ray into the
// pose and the focal length.
CameraGradient ray_backward(const CameraIntrinsics& intr, const PoseSE3& pose,
                            PixelCoord pixel, const Vec3& grad_origin,
                            const Vec3& grad_direction);

// Rig positions, in this order.
enum class RigView : int { Bottom = 0, Center = 1, Left = 2, Right = 3, Top = 4 };
inline constexpr int kRigViews = 5;

const char* rig_view_name(int view);
// Accepts a name ("center") or an index ("1"); throws std::invalid_argument.
int parse_rig_view(const std::string& name);

// Five parallel cameras in the bottom-center-left-right-top cross. The
// center camera sits at the rig origin, the others are offset by the
// baseline along rig x (left/right) or rig y (bottom/top).
std::array<PoseSE3, kRigViews> rig_layout(double baseline);

// Composition a ∘ b (apply b, then a).
PoseSE3 compose(const PoseSE3& a, const PoseSE3& b);
PoseSE3 inverse(const PoseSE3& pose);

// One line per camera: "id rx ry rz nx ny nz focal".
struct CameraRecord {
  int id = 0;
  PoseSE3 pose;
  double focal = 1.0;
};

std::vector<CameraRecord> read_pose_file(const std::string& path);
void write_pose_file(const std::string& path,
                     const std::vector<CameraRecord>& cameras);

}  // namespace msnerf
