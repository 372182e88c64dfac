/**
 * Parsing of exported sample records into dense numeric views.
 *
 * One NDJSON line is one counterfactual pair. The parser keeps the raw line
 * around (byte parity checks depend on it) and flattens the value matrices
 * into row-major Float64Arrays so consumers can hand rows to math kernels
 * without re-walking JSON. Row access returns subarray views, not copies.
 */

export type InterventionKind = "hard" | "soft" | "time_varying";

export interface Waveform {
  amp: number;
  freq: number;
  phase: number;
  offset: number;
}

export interface InterventionView {
  kind: InterventionKind;
  /** Variable index in the full system (hidden variables included). */
  target: number;
  /** Column of the target in the observed matrices, -1 when hidden. */
  targetCol: number;
  value: number;
  window: [number, number];
  /** (mean, std) band used for hard-value clipping, when recorded. */
  clip: [number, number] | null;
  waveform: Waveform | null;
}

export interface VariableRoles {
  observed: Int32Array;
  outcome: number;
  outcomeCol: number;
  treatment: number;
  treatmentCol: number;
}

export interface SampleFlags {
  diverged: boolean;
  saturated: boolean;
  saturatedAny: boolean;
}

export interface NormStats {
  mean: Float64Array;
  std: Float64Array;
}

export interface SampleView {
  batch: number;
  item: number;
  /** Number of observations. */
  T: number;
  nObsVars: number;
  nVars: number;
  timestamps: Float64Array;
  /** Row-major T x nObsVars. */
  observational: Float64Array;
  interventional: Float64Array;
  normStats: NormStats;
  onsetIndex: number;
  intervention: InterventionView;
  variables: VariableRoles;
  flags: SampleFlags;
  /** The exact NDJSON line this view was parsed from (no trailing newline). */
  raw: string;
}

export class RecordParseError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "RecordParseError";
  }
}

function asNumberArray(value: unknown, what: string): number[] {
  if (!Array.isArray(value) || value.some((v) => typeof v !== "number")) {
    throw new RecordParseError(`${what} is not a numeric array`);
  }
  return value as number[];
}

function flattenMatrix(value: unknown, rows: number, cols: number,
                       what: string): Float64Array {
  if (!Array.isArray(value) || value.length !== rows) {
    throw new RecordParseError(`${what} has ${
      Array.isArray(value) ? value.length : "no"} rows, expected ${rows}`);
  }
  const out = new Float64Array(rows * cols);
  for (let t = 0; t < rows; t++) {
    const row = asNumberArray(value[t], `${what}[${t}]`);
    if (row.length !== cols) {
      throw new RecordParseError(
        `${what}[${t}] has ${row.length} columns, expected ${cols}`);
    }
    out.set(row, t * cols);
  }
  return out;
}

function asPair(value: unknown, what: string): [number, number] {
  const arr = asNumberArray(value, what);
  if (arr.length !== 2) {
    throw new RecordParseError(`${what} must have exactly 2 entries`);
  }
  return [arr[0]!, arr[1]!];
}

/** Parse one NDJSON record line into a dense view. */
export function parseRecord(line: string): SampleView {
  let rec: any;
  try {
    rec = JSON.parse(line);
  } catch (err) {
    throw new RecordParseError(`record is not valid JSON: ${(err as Error).message}`);
  }
  if (typeof rec !== "object" || rec === null) {
    throw new RecordParseError("record is not a JSON object");
  }

  const T = rec.T;
  const nObsVars = rec.n_obs_vars;
  if (!Number.isInteger(T) || !Number.isInteger(nObsVars)) {
    throw new RecordParseError("record is missing integer T / n_obs_vars");
  }

  const timestamps = Float64Array.from(asNumberArray(rec.timestamps, "timestamps"));
  if (timestamps.length !== T) {
    throw new RecordParseError(
      `timestamps length ${timestamps.length} disagrees with T=${T}`);
  }

  const iv = rec.intervention ?? {};
  const wf = iv.waveform;
  const variables = rec.variables ?? {};
  const flags = rec.flags ?? {};
  const stats = rec.norm_stats ?? {};

  return {
    batch: rec.batch,
    item: rec.item,
    T,
    nObsVars,
    nVars: rec.n_vars,
    timestamps,
    observational: flattenMatrix(rec.observational, T, nObsVars, "observational"),
    interventional: flattenMatrix(rec.interventional, T, nObsVars, "interventional"),
    normStats: {
      mean: Float64Array.from(asNumberArray(stats.mean, "norm_stats.mean")),
      std: Float64Array.from(asNumberArray(stats.std, "norm_stats.std")),
    },
    onsetIndex: rec.onset_index,
    intervention: {
      kind: iv.kind,
      target: iv.target,
      targetCol: iv.target_col,
      value: iv.value,
      window: asPair(iv.window, "intervention.window"),
      clip: iv.clip == null ? null : asPair(iv.clip, "intervention.clip"),
      waveform: wf == null ? null : {
        amp: wf.amp, freq: wf.freq, phase: wf.phase, offset: wf.offset,
      },
    },
    variables: {
      observed: Int32Array.from(asNumberArray(variables.observed, "variables.observed")),
      outcome: variables.outcome,
      outcomeCol: variables.outcome_col,
      treatment: variables.treatment,
      treatmentCol: variables.treatment_col,
    },
    flags: {
      diverged: Boolean(flags.diverged),
      saturated: Boolean(flags.saturated),
      saturatedAny: Boolean(flags.saturated_any),
    },
    raw: line,
  };
}

/** Split a batch's NDJSON text into record views (one per non-empty line). */
export function parseBatchText(text: string): SampleView[] {
  return text
    .split("\n")
    .filter((line) => line.length > 0)
    .map(parseRecord);
}

/**
 * Observation row t of a record matrix as a zero-copy subarray view into the
 * flattened storage. Mutating the returned array mutates the view's buffer.
 */
export function row(view: SampleView, matrix: Float64Array, t: number): Float64Array {
  if (t < 0 || t >= view.T) {
    throw new RangeError(`row ${t} outside horizon 0..${view.T - 1}`);
  }
  return matrix.subarray(t * view.nObsVars, (t + 1) * view.nObsVars);
}
