#include "pstf/core/version.hpp"

#ifndef PSTF_CODE_VERSION
#define PSTF_CODE_VERSION "unknown"
#endif

namespace pstf {

const char* code_version() { return PSTF_CODE_VERSION; }

}  // namespace pstf
