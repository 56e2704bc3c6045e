#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ruinscope {

enum class Errc {
  // geo
  EmptyPolygon,
  NonFinite,
  DegenerateEnvelope,
  DuplicatePoints,
  TooFewPoints,
  // ingest
  ParseError,
  ImageMismatch,
  DecodeError,
  EmptyIntersection,
  UnknownLabel,
  // nn
  ShapeMismatch,
  NonScalarLoss,
  AllMasked,
  // metrics
  LengthMismatch,
  OutOfRange,
  EmptyInput,
  Degenerate,
  // experiments
  UnknownDisaster,
  EmptyTarget,
  NonFiniteLoss,
  ConfigError,
  Io,
};

std::string_view errc_name(Errc code) noexcept;

/// Exception carrying a machine-readable error kind.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::EmptyPolygon: return "EmptyPolygon";
    case Errc::NonFinite: return "NonFinite";
    case Errc::DegenerateEnvelope: return "DegenerateEnvelope";
    case Errc::DuplicatePoints: return "DuplicatePoints";
    case Errc::TooFewPoints: return "TooFewPoints";
    case Errc::ParseError: return "ParseError";
    case Errc::ImageMismatch: return "ImageMismatch";
    case Errc::DecodeError: return "DecodeError";
    case Errc::EmptyIntersection: return "EmptyIntersection";
    case Errc::UnknownLabel: return "UnknownLabel";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NonScalarLoss: return "NonScalarLoss";
    case Errc::AllMasked: return "AllMasked";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::Degenerate: return "Degenerate";
    case Errc::UnknownDisaster: return "UnknownDisaster";
    case Errc::EmptyTarget: return "EmptyTarget";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::ConfigError: return "ConfigError";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace ruinscope
