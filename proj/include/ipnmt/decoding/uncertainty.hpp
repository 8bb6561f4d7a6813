#pragma once

#include <span>

namespace ipnmt::decoding {

// Shannon entropy in nats; 0 log 0 counts as 0.
double entropy(std::span<const double> dist);

// H > epsilon, strictly.
bool is_uncertain_token(double entropy, double epsilon);

// Stopping criterion for a partial translation: the last token is uncertain
// and its entropy jumped by more than delta relative to the previous step.
// Undefined ratios (no previous step, or previous entropy 0) count as no
// jump.
bool is_uncertain_sequence(double entropy, double previous_entropy, double epsilon,
                           double delta);

}  // namespace ipnmt::decoding
