#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace qrn {

/// Recorded gate activity of one forward pass. Values are stored at 32-bit
/// regardless of compute precision. One entry per (layer, direction) in
/// evaluation order; the last layer appears forward-only and without reset
/// rows.
struct GateTraceEntry {
  std::size_t layer = 0;  // 0-based
  bool backward = false;
  std::vector<std::vector<float>> update;  // [T][gate_rows]
  std::vector<std::vector<float>> reset;   // empty when the layer has no reset gate
  std::vector<std::vector<float>> states;  // reduced queries, [T][d]
};

struct GateTrace {
  std::vector<GateTraceEntry> entries;
  std::vector<float> final_state;
};

float mean_gate(const std::vector<std::vector<float>>& rows);
float trace_mean_update(const GateTrace& trace);
float trace_mean_reset(const GateTrace& trace);

/// Fixed two-decimal table mirroring the update/reset column layout of the
/// dialog/story visualizations: one row per context sentence, one update
/// column per layer plus forward/backward reset columns for non-last layers.
std::string render_trace_human(const GateTrace& trace,
                               const std::vector<std::string>& context,
                               const std::string& question, const std::string& gold,
                               const std::string& predicted);

/// Tab-separated, full-precision variant of the same table. First line is a
/// '#'-prefixed header naming the columns.
std::string render_trace_machine(const GateTrace& trace,
                                 const std::vector<std::string>& context,
                                 const std::string& question, const std::string& gold,
                                 const std::string& predicted);

}  // namespace qrn
