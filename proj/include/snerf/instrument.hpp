#pragma once

#include <cstddef>
#include <cstdint>

// Bookkeeping for which gradient paths are live during each optimisation step.
// The training loop must never have the volume renderer and the feature
// extractor differentiating inside the same step.
namespace snerf::instrument {

enum class Subsystem : std::uint8_t { renderer = 1, extractor = 2 };

struct Stats {
  std::size_t steps = 0;
  std::size_t renderer_steps = 0;    ///< steps that used only the renderer path
  std::size_t extractor_steps = 0;   ///< steps that used only the extractor path
  std::size_t coupled_steps = 0;     ///< steps that used both
  std::size_t overlapping_scopes = 0;  ///< a path opened while the other was still live
  std::size_t combined_reference_calls = 0;
  std::size_t extractor_forward_calls = 0;  ///< feature extraction runs, with or without gradients
};

Stats stats();
void reset();

/// Marks a gradient path active for its lifetime.
class GradientPath {
 public:
  explicit GradientPath(Subsystem s);
  ~GradientPath();
  GradientPath(const GradientPath&) = delete;
  GradientPath& operator=(const GradientPath&) = delete;

 private:
  Subsystem subsystem_;
};

/// One optimisation step; records the set of gradient paths used inside it.
class Step {
 public:
  Step();
  ~Step();
  Step(const Step&) = delete;
  Step& operator=(const Step&) = delete;

 private:
  std::uint8_t saved_mask_;
  bool outer_;
};

void note_combined_reference_call();
void note_extractor_forward();

}  // namespace snerf::instrument
