#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cqa/decision.hpp"

using namespace cqa;
using namespace cqa::decision;

namespace {

uq::PredictedQuality pred(int cls, double variance) {
    uq::PredictedQuality q;
    q.predicted_class = cls;
    q.variance = variance;
    return q;
}

ClinicianAssessment said(int cls) { return {"s:0", "r1", cls, "t"}; }

}  // namespace

TEST_CASE("abstain above tau") {
    auto v = adjudicate(pred(1, 0.5), 0.2);
    CHECK(v.status == Status::abstain);
    CHECK_FALSE(v.predicted_class.has_value());
    CHECK_FALSE(v.warning);
    CHECK(v.message == kAbstainMessage);
    CHECK(adjudicate(pred(1, 0.2), 0.2).status == Status::confident);
}

TEST_CASE("confident without assessment") {
    auto v = adjudicate(pred(2, 0.01), 0.2);
    CHECK(v.status == Status::confident);
    CHECK(v.predicted_class == 2);
    CHECK_FALSE(v.warning);
}

TEST_CASE("exhaustive truth table") {
    int warnings = 0;
    for (int model = 0; model < 3; ++model)
        for (int clin = 0; clin < 3; ++clin)
            for (bool abstain : {false, true}) {
                auto v = adjudicate(pred(model, abstain ? 0.9 : 0.1), 0.5, said(clin));
                CAPTURE(model);
                CAPTURE(clin);
                CAPTURE(abstain);
                const bool expect_warn = !abstain && clin == 2 && model < 2;
                CHECK(v.warning == expect_warn);
                CHECK(v.status == (abstain ? Status::abstain : Status::confident));
                if (abstain) CHECK(v.message == kAbstainMessage);
                else if (expect_warn) CHECK(v.message == kWarningMessage);
                else if (model == clin) CHECK(v.message == kAgreementMessage);
                else CHECK(v.message == kNoWarningMessage);
                warnings += v.warning;
            }
    CHECK(warnings == 2);
}

TEST_CASE("status names") {
    CHECK(to_string(Status::confident) == "confident");
    CHECK(to_string(Status::abstain) == "abstain");
}
