// SPDX-License-Identifier: Apache-2.0
#pragma once

// The library is compiled once per floating-point precision. Each build lives
// in its own inline namespace so both can be linked into the same binary.
#if defined(PTSC_SINGLE_PRECISION)
#define PTSC_BEGIN_NAMESPACE \
  namespace ptsc {           \
  inline namespace f32 {
#else
#define PTSC_BEGIN_NAMESPACE \
  namespace ptsc {           \
  inline namespace f64 {
#endif
#define PTSC_END_NAMESPACE \
  }                        \
  }

PTSC_BEGIN_NAMESPACE

#if defined(PTSC_SINGLE_PRECISION)
using Real = float;
inline constexpr const char* kPrecisionName = "f32";
#else
using Real = double;
inline constexpr const char* kPrecisionName = "f64";
#endif

PTSC_END_NAMESPACE
