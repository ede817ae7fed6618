#pragma once

#include <stdexcept>
#include <string>

namespace flowlab {

// All library failures derive from Error so callers can map them to
// exit codes in one place.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class SingularMatrix : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

class CorruptCheckpoint : public Error {
 public:
  using Error::Error;
};

class VersionMismatch : public Error {
 public:
  using Error::Error;
};

class BadMagic : public Error {
 public:
  using Error::Error;
};

class TruncatedFile : public Error {
 public:
  using Error::Error;
};

class TooFewExamples : public Error {
 public:
  using Error::Error;
};

class NotConstantVolume : public Error {
 public:
  using Error::Error;
};

class ChannelMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyEnsemble : public Error {
 public:
  using Error::Error;
};

class InvalidDim : public Error {
 public:
  using Error::Error;
};

class AlreadyScaled : public Error {
 public:
  using Error::Error;
};

class InvalidLipschitz : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowlab
