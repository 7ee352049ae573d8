#pragma once

#include <stdexcept>
#include <string>

namespace qmts {

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define QMTS_DEFINE_ERROR(Name)                                              \
    struct Name : Error {                                                    \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
    }

QMTS_DEFINE_ERROR(DimensionMismatch);
QMTS_DEFINE_ERROR(ShapeMismatch);
QMTS_DEFINE_ERROR(NotNormalized);
QMTS_DEFINE_ERROR(NotComposable);
QMTS_DEFINE_ERROR(PostSelectionImpossible);
QMTS_DEFINE_ERROR(NotPositive);
QMTS_DEFINE_ERROR(SpaceMismatch);
QMTS_DEFINE_ERROR(LabelConflict);
QMTS_DEFINE_ERROR(NotTracePreserving);
QMTS_DEFINE_ERROR(BrokenMemoryChain);
QMTS_DEFINE_ERROR(SlotMismatch);
QMTS_DEFINE_ERROR(MissingTimeLabels);
QMTS_DEFINE_ERROR(ZeroOperator);
QMTS_DEFINE_ERROR(NotEqualized);
QMTS_DEFINE_ERROR(ParseError);

#undef QMTS_DEFINE_ERROR

}  // namespace qmts
