#pragma once

#include <span>

#include "atba/data.hpp"
#include "atba/model.hpp"

namespace atba {

// Argmax class with lowest-index tie-break.
std::size_t predict(const ReferenceModel& model, const TokenSeq& tokens);

// Fraction of examples predicted as their own label.
double measure_accuracy(const ReferenceModel& model, std::span<const Example> split);

// Fraction of non-target examples that, once poisoned with the trigger, are
// predicted as the target label. Returns the count of eligible examples via
// n_eligible. With an empty trigger this degenerates to the rate of natural
// misclassification into the target.
double measure_asr(const ReferenceModel& model, std::span<const Example> split,
                   const TriggerSeq& trigger, std::size_t target_label,
                   TriggerPosition position, std::size_t max_len,
                   std::size_t* n_eligible = nullptr, std::uint64_t splice_seed = 0);

}  // namespace atba
