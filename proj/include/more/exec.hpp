#pragma once

namespace more {

/// Selects the OpenMP kernels or their serial reference versions. Both
/// produce bit-identical results; the serial path exists for testing and
/// benchmarking.
enum class Exec { serial, parallel };

} // namespace more
