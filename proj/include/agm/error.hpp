// error.hpp
//
// Exception hierarchy shared by every module. Each failure mode a caller may
// want to branch on gets its own type; everything derives from agm::Error.

#pragma once

#include <stdexcept>
#include <string>

namespace agm
{

class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Shape or length disagreement between operands.
class DimensionError : public Error
{
public:
    using Error::Error;
};

/// Argument outside its documented domain (nonpositive learning rate, tau <= 0, ...).
class ValueError : public Error
{
public:
    using Error::Error;
};

/// Embedding whose norm is too small to normalize.
class DegenerateEmbeddingError : public Error
{
public:
    using Error::Error;
};

/// Attention map is identically zero, so no prompt can be derived.
class NoActivationError : public Error
{
public:
    using Error::Error;
};

// --- codecs and files ------------------------------------------------------

class FormatError : public Error
{
public:
    using Error::Error;
};

class UnsupportedFormatError : public FormatError
{
public:
    using FormatError::FormatError;
};

class TruncatedError : public FormatError
{
public:
    using FormatError::FormatError;
};

class IoError : public Error
{
public:
    using Error::Error;
};

class ManifestError : public Error
{
public:
    using Error::Error;
};

class ConfigError : public Error
{
public:
    using Error::Error;
};

// --- adapter protocol codec -------------------------------------------------

class ProtocolError : public Error
{
public:
    using Error::Error;
};

class UnknownOpError : public ProtocolError
{
public:
    using ProtocolError::ProtocolError;
};

class VersionError : public ProtocolError
{
public:
    using ProtocolError::ProtocolError;
};

class Base64Error : public ProtocolError
{
public:
    using ProtocolError::ProtocolError;
};

class PayloadLengthError : public ProtocolError
{
public:
    using ProtocolError::ProtocolError;
};

// --- external adapter process ----------------------------------------------

class AdapterError : public Error
{
public:
    using Error::Error;
};

class AdapterSpawnError : public AdapterError
{
public:
    using AdapterError::AdapterError;
};

class AdapterTimeoutError : public AdapterError
{
public:
    using AdapterError::AdapterError;
};

class AdapterReplyError : public AdapterError
{
public:
    using AdapterError::AdapterError;
};

class AdapterDimMismatchError : public AdapterError
{
public:
    using AdapterError::AdapterError;
};

// --- pipeline ---------------------------------------------------------------

/// Failure inside one pipeline stage; what() starts with the stage name.
class StageError : public Error
{
public:
    StageError(const std::string& stage, const std::string& message)
        : Error("stage '" + stage + "': " + message), stage_(stage)
    {
    }
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

}  // namespace agm
