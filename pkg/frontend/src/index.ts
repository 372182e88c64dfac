export {
  ConfigValidationError,
  PriorClosedError,
  PriorHandle,
  PriorNotFoundError,
  ServiceError,
  openPrior,
} from "./client.js";
export type {
  Batch,
  OpenPriorOptions,
  PriorInfo,
  ValidationIssue,
} from "./client.js";
export { RecordParseError, parseBatchText, parseRecord, row } from "./records.js";
export type {
  InterventionKind,
  InterventionView,
  NormStats,
  SampleFlags,
  SampleView,
  VariableRoles,
  Waveform,
} from "./records.js";
