export {
  EnvHandle,
  makeEnv,
  type EnvSchema,
  type MakeEnvOptions,
  type Observation,
  type StepInfo,
  type StepResult,
} from "./bindings.js";
export {
  EXPERT_SCHEMA_VERSION,
  loadExpertDataset,
  validateActionArray,
  type ExpertDataset,
  type ExpertManifest,
  type ExpertSample,
} from "./expert.js";
export {
  BindingError,
  ClosedHandle,
  ParseError,
  ShapeError,
  SteppedAfterDone,
  VersionMismatch,
} from "./errors.js";
