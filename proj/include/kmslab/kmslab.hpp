#pragma once

#include "common.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "detector.hpp"
#include "disjointness.hpp"
#include "liouville.hpp"
#include "oneparticle.hpp"
#include "quadrature.hpp"
#include "quasifree.hpp"

namespace kmslab {

inline constexpr const char* version() {
#ifdef KMSLAB_VERSION
  return KMSLAB_VERSION;
#else
  return "unknown";
#endif
}

}  // namespace kmslab
