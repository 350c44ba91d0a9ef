#pragma once
// Accept / abstain / warn policy combining a model prediction, the calibrated
// uncertainty threshold and an optional clinician assessment.

#include <optional>
#include <string>

#include "cqa/uq.hpp"

namespace cqa::decision {

struct ClinicianAssessment {
    std::string slice_id;
    std::string rater_id;
    int assessed_class = 0;
    std::string timestamp;
};

enum class Status { confident, abstain };
std::string to_string(Status s);

struct Verdict {
    Status status = Status::abstain;
    std::optional<int> predicted_class;  // present iff confident
    bool warning = false;
    std::string message;
};

inline constexpr const char* kAbstainMessage =
    "This case exhibits high uncertainty for the AI model; please review carefully.";
inline constexpr const char* kWarningMessage =
    "The model confidently predicts this contour needs revision; please reevaluate before accepting.";
inline constexpr const char* kAgreementMessage = "Model and clinician agree; no warning.";
inline constexpr const char* kNoWarningMessage = "No warning.";
inline constexpr const char* kAwaitingMessage = "Confident prediction; awaiting clinician assessment.";

// variance > tau abstains. A confident prediction of class 0 or 1 against a
// clinician assessment of class 2 raises a warning; nothing else does.
Verdict adjudicate(const uq::PredictedQuality& pred, double tau,
                   const std::optional<ClinicianAssessment>& assessment = std::nullopt);

}  // namespace cqa::decision
