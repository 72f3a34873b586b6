#pragma once

#include <stdexcept>
#include <string>

#include "l2caf/network.hpp"

namespace l2caf {

class ModelIoError : public std::runtime_error {
 public:
  enum class Code { kIo, kManifest, kTruncatedBlob, kChecksumMismatch };

  ModelIoError(Code code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

/// .tnet format: UTF-8 JSON manifest, a NUL separator, then one raw blob of
/// little-endian float64 tensors at the offsets recorded in the manifest.
void save_model(const NetworkModel& m, const std::string& path);
NetworkModel load_model(const std::string& path);

}  // namespace l2caf
