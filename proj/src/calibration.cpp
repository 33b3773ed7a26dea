#include "rehab/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rehab/error.hpp"

namespace rehab {
namespace {

constexpr double kMinPitch = 0.05;
constexpr double kMinCross = 1e-4;
// Slack for floating-point round-off at exact half-pitch ties.
constexpr double kTieSlack = 1e-9;

double cross_xz(Vec3 a, Vec3 b) { return a.z * b.x - a.x * b.z; }
double dot_xz(Vec3 a, Vec3 b) { return a.x * b.x + a.z * b.z; }
Vec3 on_floor(Vec3 p) { return {p.x, 0.0, p.z}; }

std::string cell_text(Cell c) {
  return "(" + std::to_string(c.row) + "," + std::to_string(c.col) + ")";
}

const CalibrationSample& sample_for(std::span<const CalibrationSample> samples, Cell cell) {
  const auto it = std::find_if(samples.begin(), samples.end(),
                               [&](const CalibrationSample& s) { return s.designated_cell == cell; });
  if (it == samples.end()) {
    throw Error(ErrorCode::InvalidDesignatedCell, "missing sample for cell " + cell_text(cell));
  }
  return *it;
}

// Nearest integer with exact ties going to the lower index.
int round_half_down(double u) { return static_cast<int>(std::ceil(u - 0.5 - kTieSlack)); }

}  // namespace

bool is_valid_cell(GridLayout layout, Cell cell) {
  if (layout == GridLayout::Line3) return cell.row == 0 && cell.col >= 0 && cell.col <= 2;
  return cell.row >= 0 && cell.row <= 2 && cell.col >= 0 && cell.col <= 2;
}

std::vector<Cell> layout_cells(GridLayout layout) {
  std::vector<Cell> out;
  const int rows = layout == GridLayout::Line3 ? 1 : 3;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < 3; ++c) out.push_back({r, c});
  }
  return out;
}

std::array<Cell, 3> designated_cells(GridLayout layout) {
  if (layout == GridLayout::Line3) return {Cell{0, 0}, Cell{0, 1}, Cell{0, 2}};
  return {Cell{0, 0}, Cell{0, 2}, Cell{2, 0}};
}

Vec3 GridFrame::cell_center(Cell cell) const {
  return origin + static_cast<double>(cell.row) * basis_row + static_cast<double>(cell.col) * basis_col;
}

GridFrame estimate_grid_frame(GridLayout layout, std::span<const CalibrationSample> samples) {
  if (samples.size() != 3) {
    throw Error(ErrorCode::InvalidDesignatedCell, "exactly three samples are required");
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      if (samples[i].designated_cell == samples[j].designated_cell) {
        throw Error(ErrorCode::DuplicateCell,
                    "cell " + cell_text(samples[i].designated_cell) + " sampled twice");
      }
    }
  }
  const auto designated = designated_cells(layout);
  for (const auto& s : samples) {
    if (std::find(designated.begin(), designated.end(), s.designated_cell) == designated.end()) {
      throw Error(ErrorCode::InvalidDesignatedCell,
                  "cell " + cell_text(s.designated_cell) + " is not a calibration position");
    }
  }

  GridFrame grid;
  grid.layout = layout;

  if (layout == GridLayout::Grid3x3) {
    const Vec3 p00 = on_floor(sample_for(samples, {0, 0}).floor_point);
    const Vec3 p02 = on_floor(sample_for(samples, {0, 2}).floor_point);
    const Vec3 p20 = on_floor(sample_for(samples, {2, 0}).floor_point);
    grid.origin = p00;
    grid.basis_col = 0.5 * (p02 - p00);
    grid.basis_row = 0.5 * (p20 - p00);
    if (grid.col_pitch_m() < kMinPitch || grid.row_pitch_m() < kMinPitch) {
      throw Error(ErrorCode::PitchTooSmall, "cell pitch below 0.05 m");
    }
    if (std::abs(cross_xz(grid.basis_row, grid.basis_col)) < kMinCross) {
      throw Error(ErrorCode::CollinearSamples, "calibration samples are collinear");
    }
    return grid;
  }

  // Line3: total least-squares line through the three floor points.
  std::array<Vec3, 3> p{};
  for (int c = 0; c < 3; ++c) p[c] = on_floor(sample_for(samples, {0, c}).floor_point);
  const Vec3 mean = (1.0 / 3.0) * (p[0] + p[1] + p[2]);
  double sxx = 0.0, szz = 0.0, sxz = 0.0;
  for (const Vec3& q : p) {
    const Vec3 d = q - mean;
    sxx += d.x * d.x;
    szz += d.z * d.z;
    sxz += d.x * d.z;
  }
  const double angle = 0.5 * std::atan2(2.0 * sxz, sxx - szz);
  Vec3 dir{std::cos(angle), 0.0, std::sin(angle)};
  if (dot_xz(p[2] - p[0], dir) < 0.0) dir = -1.0 * dir;
  auto project = [&](Vec3 q) { return mean + dot_xz(q - mean, dir) * dir; };
  grid.origin = project(p[0]);
  grid.basis_col = 0.5 * (project(p[2]) - grid.origin);
  grid.basis_row = {};
  if (grid.col_pitch_m() < kMinPitch) {
    throw Error(ErrorCode::PitchTooSmall, "cell pitch below 0.05 m");
  }
  return grid;
}

std::optional<Cell> locate_cell(const GridFrame& grid, Vec3 floor_point) {
  const Vec3 d = on_floor(floor_point) - grid.origin;
  double u = 0.0;  // row coordinate
  double v = 0.0;  // column coordinate
  if (grid.layout == GridLayout::Grid3x3) {
    const Vec3& br = grid.basis_row;
    const Vec3& bc = grid.basis_col;
    const double det = br.x * bc.z - bc.x * br.z;
    u = (d.x * bc.z - bc.x * d.z) / det;
    v = (br.x * d.z - d.x * br.z) / det;
  } else {
    const Vec3& bc = grid.basis_col;
    const double len2 = dot_xz(bc, bc);
    v = dot_xz(d, bc) / len2;
    u = cross_xz(d, bc) / len2;  // perpendicular offset in pitch units
  }
  const Cell cell{round_half_down(u), round_half_down(v)};
  const double tol = grid.tolerance_factor + kTieSlack;
  if (std::abs(u - cell.row) > tol || std::abs(v - cell.col) > tol) return std::nullopt;
  if (!is_valid_cell(grid.layout, cell)) return std::nullopt;
  return cell;
}

Vec3 player_floor_point(const SkeletonFrame& frame) {
  return on_floor(0.5 * (frame[JointId::AnkleL] + frame[JointId::AnkleR]));
}

std::optional<std::int64_t> HandRaiseDetector::feed(const SkeletonFrame& frame) {
  const double head = frame[JointId::Head].y;
  const double hand = std::max(frame[JointId::HandL].y, frame[JointId::HandR].y);
  const bool qualifying = hand > head + options_.height_margin_m;

  if (!qualifying) {
    if (run_start_ms_ && ++dropouts_ <= options_.max_dropout_frames) return std::nullopt;
    run_start_ms_.reset();
    dropouts_ = 0;
    fired_ = false;
    return std::nullopt;
  }
  dropouts_ = 0;
  if (!run_start_ms_) run_start_ms_ = frame.t_ms;
  if (fired_) return std::nullopt;
  const double held_s = static_cast<double>(frame.t_ms - *run_start_ms_) / 1000.0;
  if (held_s + 1e-9 >= options_.dwell_s) {
    fired_ = true;
    return frame.t_ms;
  }
  return std::nullopt;
}

void HandRaiseDetector::consume() { fired_ = run_start_ms_.has_value(); }

void HandRaiseDetector::reset() {
  run_start_ms_.reset();
  dropouts_ = 0;
  fired_ = false;
}

CalibrationProcess::CalibrationProcess(GridLayout layout, HandRaiseDetector::Options options)
    : layout_(layout), detector_(options) {}

std::optional<Cell> CalibrationProcess::pending_cell() const {
  if (complete()) return std::nullopt;
  return designated_cells(layout_)[samples_.size()];
}

bool CalibrationProcess::feed(const SkeletonFrame& frame) {
  last_frame_ = frame;
  if (complete()) return false;
  if (const auto fired = detector_.feed(frame)) {
    capture(*fired);
    return true;
  }
  return false;
}

bool CalibrationProcess::confirm() {
  if (complete() || !last_frame_) return false;
  capture(last_frame_->t_ms);
  // A hand still raised at the manual confirmation must be lowered first.
  detector_.consume();
  return true;
}

void CalibrationProcess::capture(std::int64_t t_ms) {
  samples_.push_back({*pending_cell(), player_floor_point(*last_frame_), t_ms});
}

GridFrame CalibrationProcess::finish() const {
  if (!complete()) throw Error(ErrorCode::InvalidPhase, "calibration needs three samples");
  return estimate_grid_frame(layout_, samples_);
}

}  // namespace rehab
