#include "affreal/error.hpp"

namespace affreal {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::DegenerateBasis: return "DegenerateBasis";
        case ErrorKind::NotAnEdge: return "NotAnEdge";
        case ErrorKind::NotInV: return "NotInV";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::NotSymmetric: return "NotSymmetric";
        case ErrorKind::NotSymmetricNonnegative: return "NotSymmetricNonnegative";
        case ErrorKind::InsufficientSamples: return "InsufficientSamples";
        case ErrorKind::IllConditioned: return "IllConditioned";
        case ErrorKind::BasisNotExtension: return "BasisNotExtension";
        case ErrorKind::DimensionExceeded: return "DimensionExceeded";
        case ErrorKind::ConstraintViolated: return "ConstraintViolated";
        case ErrorKind::NotInDomain: return "NotInDomain";
        case ErrorKind::HorizonMismatch: return "HorizonMismatch";
        case ErrorKind::GridMismatch: return "GridMismatch";
        case ErrorKind::CflViolated: return "CflViolated";
        case ErrorKind::Parse: return "Parse";
        case ErrorKind::Io: return "Io";
        case ErrorKind::MissingArtifacts: return "MissingArtifacts";
        case ErrorKind::HashMismatch: return "HashMismatch";
    }
    return "Unknown";
}

}  // namespace affreal
