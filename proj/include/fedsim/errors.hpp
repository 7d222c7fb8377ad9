#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define FEDSIM_DEFINE_ERROR(Name)            \
  struct Name : Error {                      \
    using Error::Error;                      \
  }

// packaging
FEDSIM_DEFINE_ERROR(DtypeMismatch);
FEDSIM_DEFINE_ERROR(LayoutMismatch);
FEDSIM_DEFINE_ERROR(BadMagic);
FEDSIM_DEFINE_ERROR(Truncated);
FEDSIM_DEFINE_ERROR(UnknownCode);
FEDSIM_DEFINE_ERROR(CorruptSliceTable);

// compress
FEDSIM_DEFINE_ERROR(BadK);
FEDSIM_DEFINE_ERROR(CorruptPayload);

// aggregate
FEDSIM_DEFINE_ERROR(NoUpdates);
FEDSIM_DEFINE_ERROR(BadSampleSpec);
FEDSIM_DEFINE_ERROR(StaleUpdate);
FEDSIM_DEFINE_ERROR(DuplicateUpdate);

// trainer
FEDSIM_DEFINE_ERROR(ShapeError);
FEDSIM_DEFINE_ERROR(EmptyClient);
FEDSIM_DEFINE_ERROR(UnknownClient);

// data
FEDSIM_DEFINE_ERROR(BadSpec);
FEDSIM_DEFINE_ERROR(CountMismatch);

// partition
FEDSIM_DEFINE_ERROR(TooFewSamples);
FEDSIM_DEFINE_ERROR(BadShardSpec);
FEDSIM_DEFINE_ERROR(PartitionInfeasible);

// transport
FEDSIM_DEFINE_ERROR(UnknownEndpoint);
FEDSIM_DEFINE_ERROR(TransportError);
FEDSIM_DEFINE_ERROR(ChannelClosed);
FEDSIM_DEFINE_ERROR(DuplicateRank);
FEDSIM_DEFINE_ERROR(ConnectFailed);

// protocol
FEDSIM_DEFINE_ERROR(RoutingError);
FEDSIM_DEFINE_ERROR(RoundAborted);
FEDSIM_DEFINE_ERROR(ProtocolViolation);

// rng
FEDSIM_DEFINE_ERROR(BadParam);

// cli
FEDSIM_DEFINE_ERROR(ConfigError);

#undef FEDSIM_DEFINE_ERROR

}  // namespace fedsim
