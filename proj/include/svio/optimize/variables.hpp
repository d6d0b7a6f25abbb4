#pragma once

#include <compare>
#include <map>
#include <stdexcept>
#include <vector>

#include "svio/geometry/sim3.hpp"

namespace svio {

enum class VarKind : int {
  ScaleGravity = 0,  // 4: rotation + log-scale of the DSO-to-metric transform
  Pose = 1,          // 6
  Velocity = 2,      // 3
  Bias = 3,          // 6
  Affine = 4,        // 2
  Idepth = 5,        // 1
  Intrinsics = 6,    // 4
};

inline int var_dim(VarKind k) {
  switch (k) {
    case VarKind::ScaleGravity: return 4;
    case VarKind::Pose: return 6;
    case VarKind::Velocity: return 3;
    case VarKind::Bias: return 6;
    case VarKind::Affine: return 2;
    case VarKind::Idepth: return 1;
    case VarKind::Intrinsics: return 4;
  }
  return 0;
}

struct VarKey {
  VarKind kind = VarKind::Pose;
  int frame = -1;  // keyframe id, -1 for globals
  int index = -1;  // point index for Idepth
  auto operator<=>(const VarKey&) const = default;
};

inline VarKey sg_key() { return {VarKind::ScaleGravity, -1, -1}; }
inline VarKey pose_key(int f) { return {VarKind::Pose, f, -1}; }
inline VarKey velocity_key(int f) { return {VarKind::Velocity, f, -1}; }
inline VarKey bias_key(int f) { return {VarKind::Bias, f, -1}; }
inline VarKey affine_key(int f) { return {VarKind::Affine, f, -1}; }
inline VarKey idepth_key(int f, int i) { return {VarKind::Idepth, f, i}; }
inline VarKey intrinsics_key() { return {VarKind::Intrinsics, -1, -1}; }

// Typed variable value with the manifold increment/difference operators.
class StateValue {
 public:
  StateValue() = default;

  static StateValue from_pose(const Se3& p) {
    StateValue v;
    v.kind_ = VarKind::Pose;
    v.pose_ = p;
    return v;
  }
  static StateValue from_scale_gravity(const Quat& q, double log_scale) {
    StateValue v;
    v.kind_ = VarKind::ScaleGravity;
    v.q_ = q.normalized();
    v.log_scale_ = log_scale;
    return v;
  }
  static StateValue from_vector(VarKind kind, VecX vec) {
    StateValue v;
    v.kind_ = kind;
    v.vec_ = std::move(vec);
    if (v.vec_.size() != var_dim(kind))
      throw std::invalid_argument("StateValue: dimension mismatch");
    return v;
  }

  VarKind kind() const { return kind_; }
  int dim() const { return var_dim(kind_); }

  const Se3& pose() const { return pose_; }
  const Quat& rotation() const { return q_; }
  double log_scale() const { return log_scale_; }
  const VecX& vec() const { return vec_; }

  StateValue box_plus(const VecX& d) const {
    StateValue out = *this;
    switch (kind_) {
      case VarKind::Pose:
        out.pose_ = boxplus(pose_, Vec6(d));
        break;
      case VarKind::ScaleGravity:
        out.q_ = (q_ * so3_exp(d.head<3>())).normalized();
        out.log_scale_ = log_scale_ + d[3];
        break;
      default:
        out.vec_ = vec_ + d;
    }
    return out;
  }

  VecX box_minus(const StateValue& ref) const {
    if (ref.kind_ != kind_)
      throw std::invalid_argument("StateValue::box_minus: kind mismatch");
    switch (kind_) {
      case VarKind::Pose:
        return boxminus(pose_, ref.pose_);
      case VarKind::ScaleGravity: {
        Vec4 d;
        d.head<3>() = so3_log(ref.q_.conjugate() * q_);
        d[3] = log_scale_ - ref.log_scale_;
        return d;
      }
      default:
        return vec_ - ref.vec_;
    }
  }

 private:
  VarKind kind_ = VarKind::Velocity;
  Se3 pose_;
  Quat q_ = Quat::Identity();
  double log_scale_ = 0.0;
  VecX vec_ = VecX::Zero(3);
};

using ValueMap = std::map<VarKey, StateValue>;

// Ordered variable-to-offset map of one linear system.
class VariableLayout {
 public:
  int add(const VarKey& key) {
    auto it = offsets_.find(key);
    if (it != offsets_.end()) return it->second;
    const int off = total_;
    offsets_.emplace(key, off);
    keys_.push_back(key);
    total_ += var_dim(key.kind);
    return off;
  }

  bool contains(const VarKey& key) const { return offsets_.count(key) > 0; }

  int offset(const VarKey& key) const {
    auto it = offsets_.find(key);
    if (it == offsets_.end())
      throw std::out_of_range("VariableLayout: unknown variable");
    return it->second;
  }

  int dim() const { return total_; }
  const std::vector<VarKey>& keys() const { return keys_; }

 private:
  std::vector<VarKey> keys_;
  std::map<VarKey, int> offsets_;
  int total_ = 0;
};

}  // namespace svio
