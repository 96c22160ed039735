/// @file
/// @brief Error type shared by every module of the engine.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fusion {

enum class ErrorKind {
  // smf
  VlqOverrun,
  TruncatedInput,
  BadMagic,
  TruncatedChunk,
  SmpteDivisionUnsupported,
  DanglingRunningStatus,
  StructureError,
  // pose / blend
  ProfileMismatch,
  SkeletonMismatch,
  UnknownViseme,
  EmptyClip,
  // scheduler
  SinkRejected,
  // bvh
  MalformedHierarchy,
  ChannelCountMismatch,
  FrameCountMismatch,
  DuplicateTargetName,
  // session
  OutOfRange,
  CorruptLog,
  // plumbing
  ConfigError,
  IoError,
  InvalidArgument,
};

std::string_view kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

/// Thrown by the dispatcher when a sink refuses an event.
class DispatchAborted : public Error {
 public:
  DispatchAborted(std::size_t delivered, const std::string& message)
      : Error(ErrorKind::SinkRejected, message), delivered_(delivered) {}

  /// Events accepted before the rejection.
  std::size_t delivered() const { return delivered_; }

 private:
  std::size_t delivered_;
};

/// Thrown by the session log reader; `line()` is 1-based.
class CorruptLogError : public Error {
 public:
  CorruptLogError(std::size_t line, const std::string& message)
      : Error(ErrorKind::CorruptLog, "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace fusion
