#include <doctest.h>

#include "rvio/state.hpp"
#include "test_util.hpp"

using namespace rvio;
using namespace rvio::testing;

TEST_CASE("re-anchoring transforms the covariance with the exact Jacobian") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    FilterState s = random_state(rng, 4, 2);
    s.features[0].anchor_index = 0;
    const auto reanchored = [](FilterState x) {
      reanchor_feature(x, 0, 3);
      return x;
    };
    const FilterState after = reanchored(s);
    // The feature's world position is unchanged.
    const Vec3 before_w = feature_world_position(s.features[0], s.clones[0]);
    const Vec3 after_w = feature_world_position(after.features[0], after.clones[3]);
    CHECK((before_w - after_w).norm() < 1e-9);

    // Error-state map: every entry passes through except the new feature
    // parameters, which depend on the old parameters and both anchors.
    const MatX j = numeric_jacobian(s, s.dim(), [&](const FilterState& x) -> VecX {
      const FilterState y = reanchored(x);
      VecX out(y.dim());
      out << y.inertial.p_w_i, y.inertial.v_w_i, so3_log(y.inertial.rot_body_to_world()),
          y.inertial.b_g, y.inertial.b_a, VecX::Zero(y.dim() - 15);
      for (std::size_t i = 0; i < y.clones.size(); ++i) {
        out.segment<3>(y.clone_offset(i)) = y.clones[i].p_w_c;
        out.segment<3>(y.clone_offset(i) + 3) = so3_log(y.clones[i].rot_cam_to_world());
      }
      for (std::size_t f = 0; f < y.features.size(); ++f) {
        out.segment<3>(y.feature_offset(f)) = y.features[f].params();
      }
      return out;
    });
    // Rotation columns of log() are not the identity in general; use the
    // feature rows only, where the map is what re-anchoring must apply.
    const int fo = s.feature_offset(0);
    const MatX jf = j.middleRows(fo, 3);
    const MatX expected_block = jf * s.cov * jf.transpose();
    const MatX expected_cross = jf * s.cov;
    CHECK(relative_error(after.cov.block(fo, fo, 3, 3), expected_block) < 1e-5);
    // Cross terms with the untouched part of the state (position block).
    CHECK(relative_error(after.cov.block(fo, 0, 3, 6), expected_cross.leftCols(6)) < 1e-5);
  }
}
