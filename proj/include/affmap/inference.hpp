#pragma once

#include <memory>

#include "affmap/grid.hpp"
#include "affmap/params.hpp"

namespace affmap {

// Forward-only decoder for repeated evaluation. AHD parameters are converted
// once to single precision and workspaces are reused between calls; other
// decoder kinds run the double-precision reference path. Not thread-safe: use
// one session per thread.
class InferenceSession {
 public:
  explicit InferenceSession(const DecoderParams& params);
  ~InferenceSession();
  InferenceSession(InferenceSession&&) noexcept;
  InferenceSession& operator=(InferenceSession&&) noexcept;

  Heatmap run(const FeatureMap& f);

  const DecoderConfig& config() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace affmap
