#include "cqa/decision.hpp"

#include "cqa/errors.hpp"

namespace cqa::decision {

std::string to_string(Status s) { return s == Status::confident ? "confident" : "abstain"; }

Verdict adjudicate(const uq::PredictedQuality& pred, double tau,
                   const std::optional<ClinicianAssessment>& assessment) {
    if (!(tau >= 0.0)) throw DomainError("tau must be >= 0");
    if (assessment && (assessment->assessed_class < 0 || assessment->assessed_class > 2))
        throw DomainError("assessed class out of range");

    Verdict v;
    if (pred.variance > tau) {
        v.status = Status::abstain;
        v.message = kAbstainMessage;
        return v;
    }
    v.status = Status::confident;
    v.predicted_class = pred.predicted_class;
    if (!assessment) {
        v.message = kAwaitingMessage;
        return v;
    }
    const int clinician = assessment->assessed_class;
    v.warning = clinician == 2 && pred.predicted_class < 2;
    if (v.warning) {
        v.message = kWarningMessage;
    } else if (clinician == pred.predicted_class) {
        v.message = kAgreementMessage;
    } else {
        v.message = kNoWarningMessage;
    }
    return v;
}

}  // namespace cqa::decision
