#pragma once

#include <string>

namespace spikekit::tools {

/// Downloads the four MNIST IDX files into `dir` (gunzipped, md5-verified).
/// Returns 0 on success, 2 on any failure. Existing verified files are
/// kept.
int fetch_mnist(const std::string& dir);

}  // namespace spikekit::tools
