#pragma once

#include <complex>
#include <vector>

namespace specadv {

// In-place iterative radix-2 transform; the length must be a power of two.
// The inverse transform includes the 1/n scale.
void fft(std::vector<std::complex<double>>& a, bool inverse = false);

}  // namespace specadv
