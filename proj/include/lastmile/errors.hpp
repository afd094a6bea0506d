#pragma once

#include <stdexcept>
#include <string>

namespace lastmile {

// Base for everything thrown by this library. CLI maps these to exit code 1,
// anything else to exit code 2.
class Error : public std::runtime_error {
public:
	explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define LASTMILE_DEFINE_ERROR(Name)                            \
	class Name : public Error {                                \
	public:                                                    \
		explicit Name(const std::string& msg) : Error(msg) {}  \
	}

LASTMILE_DEFINE_ERROR(DomainError);             // argument outside its stated domain
LASTMILE_DEFINE_ERROR(OutOfRangeError);         // point beyond projection validity radius
LASTMILE_DEFINE_ERROR(CityMismatchError);       // cells from different tessellations combined
LASTMILE_DEFINE_ERROR(ParseError);              // malformed input file
LASTMILE_DEFINE_ERROR(SchemaError);             // structurally valid file, wrong shape/header
LASTMILE_DEFINE_ERROR(ValidationError);         // record-level rejection
LASTMILE_DEFINE_ERROR(EmptyCollectionError);    // no usable records at all
LASTMILE_DEFINE_ERROR(IngestError);             // too many rejected records to trust the file
LASTMILE_DEFINE_ERROR(ConfigError);             // inconsistent run configuration
LASTMILE_DEFINE_ERROR(ShapeError);              // matrix/vector dimensions disagree
LASTMILE_DEFINE_ERROR(LengthMismatchError);     // paired arrays of different length
LASTMILE_DEFINE_ERROR(DegenerateSampleError);   // sample carries no usable spread
LASTMILE_DEFINE_ERROR(InsufficientDataError);   // fewer samples than the method needs
LASTMILE_DEFINE_ERROR(InsufficientCalibrationError);
LASTMILE_DEFINE_ERROR(DivergenceError);         // training produced non-finite loss
LASTMILE_DEFINE_ERROR(TooFewGroupsError);
LASTMILE_DEFINE_ERROR(TooFewSamplesError);
LASTMILE_DEFINE_ERROR(TooFewHexesError);
LASTMILE_DEFINE_ERROR(NoDeliveriesError);

#undef LASTMILE_DEFINE_ERROR

}  // namespace lastmile
