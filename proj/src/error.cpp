#include "fusion/error.h"

namespace fusion {

std::string_view kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::VlqOverrun: return "VlqOverrun";
    case ErrorKind::TruncatedInput: return "TruncatedInput";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::TruncatedChunk: return "TruncatedChunk";
    case ErrorKind::SmpteDivisionUnsupported: return "SmpteDivisionUnsupported";
    case ErrorKind::DanglingRunningStatus: return "DanglingRunningStatus";
    case ErrorKind::StructureError: return "StructureError";
    case ErrorKind::ProfileMismatch: return "ProfileMismatch";
    case ErrorKind::SkeletonMismatch: return "SkeletonMismatch";
    case ErrorKind::UnknownViseme: return "UnknownViseme";
    case ErrorKind::EmptyClip: return "EmptyClip";
    case ErrorKind::SinkRejected: return "SinkRejected";
    case ErrorKind::MalformedHierarchy: return "MalformedHierarchy";
    case ErrorKind::ChannelCountMismatch: return "ChannelCountMismatch";
    case ErrorKind::FrameCountMismatch: return "FrameCountMismatch";
    case ErrorKind::DuplicateTargetName: return "DuplicateTargetName";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::CorruptLog: return "CorruptLog";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace fusion
