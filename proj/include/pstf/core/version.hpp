#ifndef PSTF_CORE_VERSION_HPP
#define PSTF_CORE_VERSION_HPP

namespace pstf {

// Code version recorded into run artifacts (git describe at configure time).
const char* code_version();

}  // namespace pstf

#endif  // PSTF_CORE_VERSION_HPP
