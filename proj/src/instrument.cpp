#include "snerf/instrument.hpp"

#include <mutex>

namespace snerf::instrument {

namespace {

std::mutex g_mutex;
Stats g_stats;

thread_local std::uint8_t t_step_mask = 0;
thread_local int t_step_depth = 0;
thread_local std::uint8_t t_live_mask = 0;
thread_local int t_live_count[3] = {0, 0, 0};

}  // namespace

Stats stats() {
  std::lock_guard lock(g_mutex);
  return g_stats;
}

void reset() {
  std::lock_guard lock(g_mutex);
  g_stats = {};
}

GradientPath::GradientPath(Subsystem s) : subsystem_(s) {
  const auto bit = static_cast<std::uint8_t>(s);
  if (t_live_mask & ~bit) {
    std::lock_guard lock(g_mutex);
    ++g_stats.overlapping_scopes;
  }
  ++t_live_count[bit];
  t_live_mask |= bit;
  t_step_mask |= bit;
}

GradientPath::~GradientPath() {
  const auto bit = static_cast<std::uint8_t>(subsystem_);
  if (--t_live_count[bit] == 0) t_live_mask &= static_cast<std::uint8_t>(~bit);
}

Step::Step() : saved_mask_(t_step_mask), outer_(t_step_depth == 0) {
  ++t_step_depth;
  if (outer_) t_step_mask = 0;
}

Step::~Step() {
  --t_step_depth;
  if (!outer_) return;
  const std::uint8_t mask = t_step_mask;
  t_step_mask = saved_mask_;
  std::lock_guard lock(g_mutex);
  ++g_stats.steps;
  if (mask == 3)
    ++g_stats.coupled_steps;
  else if (mask == 1)
    ++g_stats.renderer_steps;
  else if (mask == 2)
    ++g_stats.extractor_steps;
}

void note_combined_reference_call() {
  std::lock_guard lock(g_mutex);
  ++g_stats.combined_reference_calls;
}

void note_extractor_forward() {
  std::lock_guard lock(g_mutex);
  ++g_stats.extractor_forward_calls;
}

}  // namespace snerf::instrument
