#pragma once

// Linearized observability analysis of range-VIO over the reduced state
// x0 = [p v theta b_g b_a | p_F1 ... p_FN] with Cartesian features.
//
// Block rows are M_k = H_k Phi(k,1). The facet rows are built analytically
// from the propagated nominal trajectory and the Phi couplings, and
// numerically from finite differences of the range model and of the
// propagation chain. The two constructions are independent.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "rvio/imu.hpp"
#include "rvio/ranged_facet.hpp"
#include "rvio/state.hpp"

namespace rvio {

struct AnalysisState {
  InertialState inertial;
  std::vector<Vec3> features_cartesian;

  int dim() const { return 15 + 3 * static_cast<int>(features_cartesian.size()); }
};

/// Nominal trajectory at steps k = 1..K (stored at index k-1) with the
/// accumulated transitions Phi(k,1).
struct AnalysisTrajectory {
  std::vector<InertialState> states;
  std::vector<ImuSample> samples;  // samples[i] drives states[i] -> states[i+1]
  std::vector<TransitionBlocks> phi;
  double dt = 0.0;
  Vec3 gravity_w{0.0, 0.0, -9.81};

  std::size_t steps() const { return states.size(); }
  const InertialState& at(std::size_t k) const { return states.at(k - 1); }
};

AnalysisTrajectory build_analysis_trajectory(const InertialState& initial,
                                             std::span<const ImuSample> samples, double dt,
                                             const Vec3& gravity_w);

/// Camera/LRF geometry for the analysis. The camera-IMU translation must be
/// zero; only the rotation is used.
struct AnalysisSensors {
  CameraExtrinsics camera;
  LrfExtrinsics lrf;
  Vec2 fov_half{0.8, 0.6};
};

struct ObservabilityRow {
  Eigen::RowVector3d m_p = Eigen::RowVector3d::Zero();
  Eigen::RowVector3d m_v = Eigen::RowVector3d::Zero();
  Eigen::RowVector3d m_theta = Eigen::RowVector3d::Zero();
  Eigen::RowVector3d m_bg = Eigen::RowVector3d::Zero();
  Eigen::RowVector3d m_ba = Eigen::RowVector3d::Zero();
  Eigen::RowVector3d m_p1 = Eigen::RowVector3d::Zero();
  Eigen::RowVector3d m_p2 = Eigen::RowVector3d::Zero();
  Eigen::RowVector3d m_p3 = Eigen::RowVector3d::Zero();
  std::array<std::size_t, 3> facet{};  // feature indices of F1, F2, F3
  std::size_t num_features = 0;
  double scale = 1.0;  // 1/b
  double a = 0.0;
  double b = 0.0;
  Vec3 n_w = Vec3::Zero();
  Vec3 intersection = Vec3::Zero();

  /// scale * [m_p m_v m_theta m_bg m_ba | feature blocks | zeros]
  Eigen::RowVectorXd assembled() const;
};

/// Closed-form facet row at step k (1-based). Throws DegenerateFacet when
/// |b| <= epsilon.
ObservabilityRow build_row_analytic(const AnalysisTrajectory& traj, std::size_t k,
                                    std::span<const Vec3> features,
                                    const std::array<std::size_t, 3>& facet,
                                    const AnalysisSensors& sensors, double epsilon = 1e-9);

/// Finite-difference H_k times finite-difference Phi(k,1) of the nominal
/// propagation chain. Sub-blocks are reported with scale = 1.
ObservabilityRow build_row_numeric(const AnalysisTrajectory& traj, std::size_t k,
                                   std::span<const Vec3> features,
                                   const std::array<std::size_t, 3>& facet,
                                   const AnalysisSensors& sensors);

/// Two observability rows of a pinhole observation of feature j at step k.
MatX visual_rows(const AnalysisTrajectory& traj, std::size_t k, std::span<const Vec3> features,
                 std::size_t j, const AnalysisSensors& sensors);

/// N_s = [p_1, v_1, 0_6, -a_body, p_F1 ... p_FN].
VecX scale_direction(const AnalysisState& initial, const Vec3& accel_body);

/// Same, with the body acceleration read from the trajectory IMU samples.
/// Throws rvio::Error if the body-frame acceleration is not constant.
VecX scale_direction(const AnalysisTrajectory& traj, std::span<const Vec3> features,
                     double tolerance = 1e-9);

/// Body-frame kinematic acceleration implied by every sample.
std::vector<Vec3> body_accelerations(const AnalysisTrajectory& traj);

/// Depth direction of features outside the facet: zero over the inertial
/// block and the facet features, (p_Fj - center) elsewhere. With the hover
/// position at the origin this is [0_24, p_F4 ... p_FN] for facet {1,2,3}.
VecX hover_direction(std::span<const Vec3> features, std::span<const std::size_t> facet_features,
                     const Vec3& center = Vec3::Zero());

VecX translation_direction(int axis, std::size_t num_features);

/// Global rotation about gravity expressed in the world-frame error state.
VecX yaw_direction(const AnalysisState& initial, const Vec3& gravity_w);

struct ScaleResidual {
  std::size_t k = 0;
  double residual = 0.0;     // M_k N_s
  double closed_form = 0.0;  // (1/b) n^T (p_F2 - p_ik)
  double relative_error = 0.0;
};

std::vector<ScaleResidual> test_scale_observable(const AnalysisTrajectory& traj,
                                                 std::span<const Vec3> features,
                                                 std::span<const std::array<std::size_t, 3>> facets,
                                                 std::span<const std::size_t> steps,
                                                 const AnalysisSensors& sensors,
                                                 const VecX& n_s);

/// max_k |M_k N_h| / (||M_k|| ||N_h||) over the given steps.
double test_hover_nullspace(const AnalysisTrajectory& traj, std::span<const Vec3> features,
                            const std::array<std::size_t, 3>& facet,
                            std::span<const std::size_t> steps, const AnalysisSensors& sensors,
                            const VecX& n_h);

/// Streams block rows into an incrementally compressed upper-triangular
/// factor so long trajectories stay cheap.
class ObservabilityStack {
 public:
  explicit ObservabilityStack(int cols);
  void add_rows(const MatX& rows);
  void add_row(const Eigen::RowVectorXd& row);
  /// Upper-triangular R with R^T R = M^T M.
  MatX factor() const;
  std::size_t rows() const { return total_rows_; }
  int cols() const { return cols_; }

 private:
  void compress() const;
  int cols_;
  std::size_t total_rows_ = 0;
  mutable MatX r_;
  mutable std::vector<Eigen::RowVectorXd> pending_;
};

struct DirectionCheck {
  std::string name;
  double residual = 0.0;  // ||d - P d|| / ||d||, P = projector onto the nullspace
  bool in_nullspace = false;
};

struct NullspaceReport {
  int dimension = 0;
  MatX basis;  // orthonormal columns in the original coordinates
  VecX singular_values;
  double sigma_max = 0.0;
  double sigma_min = 0.0;
  double smallest_kept_ratio = 0.0;   // smallest sigma/sigma_max above the cutoff
  double largest_null_ratio = 0.0;    // largest sigma/sigma_max below the cutoff
  std::size_t rows = 0;
  std::vector<DirectionCheck> directions;
};

struct NamedDirection {
  std::string name;
  VecX direction;
};

/// SVD nullspace of the stacked rows after unit-norm column equilibration,
/// mapped back to the original coordinates. Columns with
/// sigma/sigma_max < tolerance span the nullspace.
NullspaceReport nullspace_report(const ObservabilityStack& stack,
                                 std::span<const NamedDirection> directions,
                                 double tolerance = 1e-8, double direction_tolerance = 1e-6);

/// Facet and visual rows along a trajectory. Facets come from an image-space
/// Delaunay triangulation of the visible features at each analysed step.
struct LabOptions {
  bool use_range = true;
  bool use_visual = true;
  std::size_t stride = 125;  // analysed every `stride` IMU steps
  std::size_t first_step = 1;
  double max_range = 40.0;
};

struct RangeRowRecord {
  std::size_t k = 0;
  std::array<std::size_t, 3> facet{};
  double b = 0.0;
  double range = 0.0;
};

struct LabRows {
  ObservabilityStack stack;
  std::vector<RangeRowRecord> range_rows;
  std::size_t visual_rows = 0;
};

LabRows stack_rows(const AnalysisTrajectory& traj, std::span<const Vec3> features,
                   const AnalysisSensors& sensors, const LabOptions& opts);

/// Facet (F1, F2, F3 with F2 the smallest index) hit by the LRF at step k.
std::optional<std::array<std::size_t, 3>> facet_at_step(const AnalysisTrajectory& traj,
                                                        std::size_t k,
                                                        std::span<const Vec3> features,
                                                        const AnalysisSensors& sensors);

}  // namespace rvio
