#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rehab/skeleton.hpp"

namespace rehab {

enum class GridLayout { Line3, Grid3x3 };

// Logical pillow position. Line3 cells use row 0 and col = lane.
struct Cell {
  int row = 0;
  int col = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

bool is_valid_cell(GridLayout layout, Cell cell);

// Cells of a layout in row-major order.
std::vector<Cell> layout_cells(GridLayout layout);

// The three positions the patient is asked to stand on during setup.
std::array<Cell, 3> designated_cells(GridLayout layout);

struct CalibrationSample {
  Cell designated_cell;
  Vec3 floor_point;  // y == 0
  std::int64_t captured_at_ms = 0;
};

// Floor-plane affine frame: center(r, c) = origin + r * basis_row + c * basis_col.
struct GridFrame {
  GridLayout layout = GridLayout::Grid3x3;
  Vec3 origin;
  Vec3 basis_row;  // zero for Line3
  Vec3 basis_col;
  double tolerance_factor = 0.5;

  double row_pitch_m() const { return basis_row.norm(); }
  double col_pitch_m() const { return basis_col.norm(); }
  Vec3 cell_center(Cell cell) const;

  friend bool operator==(const GridFrame&, const GridFrame&) = default;
};

// Throws DuplicateCell, InvalidDesignatedCell, PitchTooSmall or CollinearSamples.
GridFrame estimate_grid_frame(GridLayout layout, std::span<const CalibrationSample> samples);

// std::nullopt means the point is outside every cell's accepted region.
std::optional<Cell> locate_cell(const GridFrame& grid, Vec3 floor_point);

// Midpoint of the ankles projected to the floor.
Vec3 player_floor_point(const SkeletonFrame& frame);

// Fires once when a hand is held above the head for the dwell time.
class HandRaiseDetector {
 public:
  struct Options {
    double height_margin_m = 0.10;
    double dwell_s = 1.0;
    int max_dropout_frames = 2;
  };

  HandRaiseDetector() : HandRaiseDetector(Options{}) {}
  explicit HandRaiseDetector(Options options) : options_(options) {}

  // Returns the confirmation timestamp on the frame that completes the dwell.
  std::optional<std::int64_t> feed(const SkeletonFrame& frame);
  void reset();
  // Treats the current run as already confirmed; a new run needs the hand lowered.
  void consume();

 private:
  Options options_;
  std::optional<std::int64_t> run_start_ms_;
  int dropouts_ = 0;
  bool fired_ = false;
};

// Drives the three-position setup. Each confirmation (hand raise or the
// therapist's button) captures the current floor point for the next cell.
class CalibrationProcess {
 public:
  explicit CalibrationProcess(GridLayout layout,
                              HandRaiseDetector::Options options = HandRaiseDetector::Options{});

  GridLayout layout() const { return layout_; }
  std::size_t samples_taken() const { return samples_.size(); }
  bool complete() const { return samples_.size() == 3; }
  std::optional<Cell> pending_cell() const;
  const std::vector<CalibrationSample>& samples() const { return samples_; }

  // Feeds a frame; returns true when the frame produced a sample.
  bool feed(const SkeletonFrame& frame);
  // Manual confirmation using the most recent frame. Returns false without one.
  bool confirm();

  // Throws the estimate_grid_frame errors, or InvalidPhase if not complete.
  GridFrame finish() const;

 private:
  void capture(std::int64_t t_ms);

  GridLayout layout_;
  HandRaiseDetector detector_;
  std::optional<SkeletonFrame> last_frame_;
  std::vector<CalibrationSample> samples_;
};

}  // namespace rehab
