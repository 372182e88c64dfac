/** A complete record object in the exported wire shape, small enough to
 * reason about by eye. Tests clone and mutate it rather than sharing state. */
export function baseRecord(): Record<string, unknown> {
  return {
    T: 3,
    batch: 4,
    item: 1,
    n_obs_vars: 2,
    n_vars: 3,
    timestamps: [0.5, 1.25, 2.0],
    observational: [
      [0.1, -0.2],
      [0.3, 0.4],
      [-0.5, 0.6],
    ],
    interventional: [
      [0.1, -0.2],
      [1.5, 0.45],
      [1.5, 0.7],
    ],
    norm_stats: { mean: [0.05, 0.1], std: [1.0, 2.0] },
    onset_index: 1,
    intervention: {
      kind: "hard",
      target: 2,
      target_col: 1,
      value: 1.5,
      window: [1.0, 2.0],
      clip: [-2.95, 3.05],
      waveform: null,
    },
    variables: {
      observed: [0, 2],
      outcome: 0,
      outcome_col: 0,
      treatment: 2,
      treatment_col: 1,
    },
    flags: { diverged: false, saturated: false, saturated_any: true },
  };
}

export function recordLine(overrides: Record<string, unknown> = {}): string {
  return JSON.stringify({ ...baseRecord(), ...overrides });
}
