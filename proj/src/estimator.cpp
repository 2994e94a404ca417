#include "rvio/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "rvio/errors.hpp"

namespace rvio {

Estimator::Estimator(const EstimatorOptions& opts, const InertialState& initial,
                     const MatX& initial_cov, const ImuSample& first_sample)
    : opts_(opts), last_raw_(first_sample) {
  if (initial_cov.rows() != FilterState::kInertialDim ||
      initial_cov.cols() != FilterState::kInertialDim) {
    throw DimensionMismatch("initial covariance must be 15x15");
  }
  state_.inertial = initial;
  state_.inertial.stamp = first_sample.stamp;
  state_.cov = initial_cov;
  opts_.tracks.window_size = opts_.max_clones;
}

void Estimator::add_imu(const ImuSample& sample) {
  if (next_raw_) catch_up();
  if (!(sample.stamp > last_raw_.stamp)) {
    throw StaleStamp("IMU reading at " + std::to_string(sample.stamp) + " s is not newer than " +
                     std::to_string(last_raw_.stamp) + " s");
  }
  next_raw_ = sample;
}

void Estimator::catch_up() {
  if (next_raw_) propagate_to(next_raw_->stamp);
}

ImuSample Estimator::reading_at(double t) const {
  if (!next_raw_ || t <= last_raw_.stamp) return last_raw_;
  const double span = next_raw_->stamp - last_raw_.stamp;
  const double w = std::clamp((t - last_raw_.stamp) / span, 0.0, 1.0);
  ImuSample s;
  s.stamp = t;
  s.omega_m = (1.0 - w) * last_raw_.omega_m + w * next_raw_->omega_m;
  s.accel_m = (1.0 - w) * last_raw_.accel_m + w * next_raw_->accel_m;
  return s;
}

void Estimator::propagate_to(double t) {
  constexpr double kTiny = 1e-12;
  while (state_.inertial.stamp < t - kTiny) {
    if (!next_raw_ || next_raw_->stamp < t - kTiny) {
      throw StreamGap("no IMU reading covers t = " + std::to_string(t) + " s");
    }
    const double from = state_.inertial.stamp;
    const double to = std::min(t, next_raw_->stamp);
    const ImuSample a = reading_at(from);
    const ImuSample b = reading_at(to);
    ImuSample mean;
    mean.stamp = to;
    mean.omega_m = 0.5 * (a.omega_m + b.omega_m);
    mean.accel_m = 0.5 * (a.accel_m + b.accel_m);
    if (to - from > kTiny) {
      propagate(state_, mean, to - from, opts_.imu_noise, opts_.world);
    } else {
      state_.inertial.stamp = to;
    }
    if (to >= next_raw_->stamp - kTiny) {
      state_.inertial.stamp = next_raw_->stamp;
      last_raw_ = *next_raw_;
      next_raw_.reset();
    }
  }
  if (next_raw_ && std::abs(state_.inertial.stamp - next_raw_->stamp) <= kTiny) {
    last_raw_ = *next_raw_;
    next_raw_.reset();
  }
  check_finite("propagation");
}

void Estimator::check_finite(const char* where) const {
  const InertialState& x = state_.inertial;
  const bool ok = x.p_w_i.allFinite() && x.v_w_i.allFinite() && x.q_w_i.coeffs().allFinite() &&
                  x.b_g.allFinite() && x.b_a.allFinite() && state_.cov.allFinite();
  if (!ok) throw Divergence(std::string("non-finite filter state after ") + where);
}

FrameReport Estimator::process_frame(double stamp, std::span<const FrameObservation> observations) {
  FrameReport report;
  report.stamp = stamp;
  propagate_to(stamp);

  // Move features off the oldest clone first so the window slides in time
  // order; otherwise anchor clones pin the window and tracks never mature.
  if (state_.clones.size() >= opts_.max_clones && state_.clones.size() > 1) {
    const std::size_t newest = state_.clones.size() - 1;
    for (std::size_t j = state_.features.size(); j-- > 0;) {
      if (state_.features[j].anchor_index != 0) continue;
      try {
        reanchor_feature(state_, j, newest);
      } catch (const Error&) {
        remove_feature(state_, j);
        ++report.features_removed;
      }
    }
  }
  const CloneResult cr = clone_pose(state_, stamp, opts_.camera, opts_.max_clones);
  const std::uint64_t cid = state_.clones.back().id;
  if (cr.dropped_clone_id) {
    for (auto& [id, track] : tracks_) {
      auto& obs = track.observations;
      obs.erase(std::remove_if(obs.begin(), obs.end(),
                               [&](const FeatureObservation& o) {
                                 return o.clone_id == *cr.dropped_clone_id;
                               }),
                obs.end());
    }
  }

  // Observations of features already in the state go to the SLAM update;
  // everything else extends the tracks.
  std::vector<FeatureObservation> slam_obs;
  std::vector<Vec2> slam_uv;
  std::set<std::uint64_t> observed;
  for (const FrameObservation& o : observations) {
    if (state_.feature_index_by_track(o.track_id)) {
      slam_obs.push_back({o.track_id, cid, o.uv});
      slam_uv.push_back(o.uv);
      observed.insert(o.track_id);
      continue;
    }
    Track& t = tracks_[o.track_id];
    t.track_id = o.track_id;
    t.score = o.score;
    t.observations.push_back({o.track_id, cid, o.uv});
  }
  report.slam_observed = slam_obs.size();
  if (!slam_obs.empty()) {
    const SlamUpdateResult su = slam_update(state_, slam_obs, opts_.noise, opts_.visual, &diag_);
    for (const auto& inn : su.innovations) {
      report.max_innovation = std::max(report.max_innovation, inn.residual.cwiseAbs().maxCoeff());
      report.nis_sum += inn.mahalanobis_sq;
      ++report.nis_count;
    }
  }

  std::vector<Track> list;
  list.reserve(tracks_.size());
  for (const auto& [id, t] : tracks_) list.push_back(t);
  const TrackAssignments assign = manage_tracks(list, slam_uv, cid, opts_.tracks);

  for (std::uint64_t id : assign.slam) {
    auto it = tracks_.find(id);
    if (it == tracks_.end()) continue;
    const Track& t = it->second;
    const Triangulation3d tri = triangulate_track(state_, t, opts_.visual);
    bool added = false;
    if (tri.status == TriangulationStatus::kOk) {
      added = initialize_slam_from_track(state_, t, opts_.noise, opts_.visual, &diag_);
    } else if (tri.status == TriangulationStatus::kInsufficientBaseline &&
               opts_.semi_infinite_init && t.observations.size() >= opts_.tracks.min_msckf_length) {
      initialize_slam_semi_infinite(state_, id, t.observations.back().uv, opts_.noise,
                                    opts_.visual);
      ++report.semi_infinite;
      added = true;
    }
    if (added) {
      ++report.slam_initialized;
      observed.insert(id);
      tracks_.erase(it);
    }
  }

  if (!assign.msckf.empty()) {
    std::vector<Track> batch;
    for (std::uint64_t id : assign.msckf) {
      if (auto it = tracks_.find(id); it != tracks_.end()) batch.push_back(it->second);
    }
    const MsckfResult mr = msckf_update(state_, batch, opts_.noise, opts_.visual, &diag_);
    report.msckf_used = mr.used;
    for (const Track& t : batch) {
      auto it = tracks_.find(t.track_id);
      if (t.observations.back().clone_id == cid) {
        // Still tracked: restart so the same measurements are not reused.
        it->second.observations.clear();
      } else {
        tracks_.erase(it);
      }
    }
  }
  for (std::uint64_t id : assign.discard) tracks_.erase(id);
  for (auto it = tracks_.begin(); it != tracks_.end();) {
    it = it->second.observations.empty() ? tracks_.erase(it) : std::next(it);
  }

  for (std::size_t j = state_.features.size(); j-- > 0;) {
    if (!observed.count(state_.features[j].track_id)) {
      remove_feature(state_, j);
      ++report.features_removed;
    }
  }
  check_finite("image update");
  return report;
}

RangeReport Estimator::process_range(const RangeSample& sample) {
  propagate_to(sample.stamp);
  RangeReport rep;
  rep.stamp = sample.stamp;
  rep.measured = sample.range_m;
  if (!opts_.use_range) return rep;
  rep.result = range_update(state_, sample, opts_.camera, opts_.lrf, opts_.noise, opts_.facet,
                            &diag_);
  check_finite("range update");
  return rep;
}

}  // namespace rvio
