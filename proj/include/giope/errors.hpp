#pragma once
#include <stdexcept>
#include <string>

namespace giope {

/// Base class for every error this library raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SupportViolation : public Error { public: using Error::Error; };
class MixedWidth : public Error { public: using Error::Error; };
class ParseError : public Error { public: using Error::Error; };
class SchemaError : public Error { public: using Error::Error; };
class EmptyDataset : public Error { public: using Error::Error; };
class EmptyGroup : public Error { public: using Error::Error; };
class DegenerateWeights : public Error { public: using Error::Error; };
class TooFewSamples : public Error { public: using Error::Error; };
class NotNormalized : public Error { public: using Error::Error; };
class InadmissibleGroup : public Error { public: using Error::Error; };
class ZeroDenominator : public Error { public: using Error::Error; };
class InadmissibleRoot : public Error { public: using Error::Error; };
class DimensionMismatch : public Error { public: using Error::Error; };
class EmptyLeaf : public Error { public: using Error::Error; };
class MissingTruth : public Error { public: using Error::Error; };
class ZeroMassGroup : public Error { public: using Error::Error; };
class NotDeterministic : public Error { public: using Error::Error; };
class InvalidDelta : public Error { public: using Error::Error; };

} // namespace giope
