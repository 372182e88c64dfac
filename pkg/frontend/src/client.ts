/**
 * HTTP client for the batch-generation service.
 *
 * A PriorHandle owns one sequential stream over an open prior: nextBatch()
 * advances a server-side counter, batch(i) is stateless random access, and
 * both return the exact NDJSON text the CLI would export (plus parsed
 * views). Two handles opened on the same config produce identical streams;
 * concurrent consumption wants separate handles.
 */
import { parseBatchText, SampleView } from "./records.js";

export interface ValidationIssue {
  /** Dotted path into the rejected payload, e.g. "config.mechanism". */
  path: string;
  message: string;
}

export class ServiceError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ServiceError";
  }
}

export class ConfigValidationError extends ServiceError {
  constructor(readonly issues: ValidationIssue[]) {
    super(422, issues.map((i) => `${i.path}: ${i.message}`).join("; "));
    this.name = "ConfigValidationError";
  }
}

export class PriorNotFoundError extends ServiceError {
  constructor(message: string) {
    super(404, message);
    this.name = "PriorNotFoundError";
  }
}

export class PriorClosedError extends Error {
  constructor(priorId: string) {
    super(`prior ${priorId} is closed`);
    this.name = "PriorClosedError";
  }
}

export interface Batch {
  index: number;
  nRecords: number;
  /** NDJSON text, byte-identical to the CLI export for this batch. */
  text: string;
  records: SampleView[];
}

export interface PriorInfo {
  priorId: string;
  configDigest: string;
  seed: number;
  batchSize: number;
  nextBatchIndex: number;
  nBatchesServed: number;
}

export interface OpenPriorOptions {
  /** Override fetch (defaults to the global). */
  fetchImpl?: typeof fetch;
}

type FetchLike = typeof fetch;

async function raiseFor(res: Response): Promise<never> {
  let detail: unknown;
  try {
    detail = (await res.json()).detail;
  } catch {
    detail = undefined;
  }
  if (res.status === 422 && Array.isArray(detail)) {
    const issues = detail.map((d: any) => ({
      // drop the leading "body" segment; the caller sent that body
      path: (d.loc ?? []).filter((p: unknown) => p !== "body").join("."),
      message: String(d.msg ?? d),
    }));
    throw new ConfigValidationError(issues);
  }
  const message = typeof detail === "string" ? detail : `HTTP ${res.status}`;
  if (res.status === 404) {
    throw new PriorNotFoundError(message);
  }
  throw new ServiceError(res.status, message);
}

export class PriorHandle {
  #closed = false;

  private constructor(
    private readonly base: string,
    private readonly fetchImpl: FetchLike,
    readonly priorId: string,
    readonly configDigest: string,
    /** Dataset header line exactly as the CLI writes it (trailing newline kept). */
    readonly headerLine: string,
  ) {}

  /** @internal */
  static async open(base: string, config: unknown,
                    fetchImpl: FetchLike): Promise<PriorHandle> {
    const res = await fetchImpl(`${base}/priors`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ config }),
    });
    if (res.status !== 201) {
      await raiseFor(res);
    }
    const created = await res.json();
    const headerRes = await fetchImpl(`${base}/priors/${created.prior_id}/header`);
    if (!headerRes.ok) {
      await raiseFor(headerRes);
    }
    return new PriorHandle(base, fetchImpl, created.prior_id,
                           created.config_digest, await headerRes.text());
  }

  get closed(): boolean {
    return this.#closed;
  }

  #guard(): void {
    if (this.#closed) {
      throw new PriorClosedError(this.priorId);
    }
  }

  /** Advance the stream: generate and return the next batch in sequence. */
  async nextBatch(): Promise<Batch> {
    this.#guard();
    const res = await this.fetchImpl(`${this.base}/priors/${this.priorId}/next`, {
      method: "POST",
    });
    if (!res.ok) {
      await raiseFor(res);
    }
    const body = await res.json();
    return {
      index: body.batch_index,
      nRecords: body.n_records,
      text: body.records,
      records: parseBatchText(body.records),
    };
  }

  /** Stateless random access; does not move the stream position. */
  async batch(index: number): Promise<Batch> {
    this.#guard();
    const res = await this.fetchImpl(
      `${this.base}/priors/${this.priorId}/batches/${index}`);
    if (!res.ok) {
      await raiseFor(res);
    }
    const text = await res.text();
    const records = parseBatchText(text);
    return { index, nRecords: records.length, text, records };
  }

  async info(): Promise<PriorInfo> {
    this.#guard();
    const res = await this.fetchImpl(`${this.base}/priors/${this.priorId}`);
    if (!res.ok) {
      await raiseFor(res);
    }
    const body = await res.json();
    return {
      priorId: body.prior_id,
      configDigest: body.config_digest,
      seed: body.seed,
      batchSize: body.batch_size,
      nextBatchIndex: body.next_batch_index,
      nBatchesServed: body.n_batches_served,
    };
  }

  /** Release the server-side session. Idempotent on the handle. */
  async close(): Promise<void> {
    if (this.#closed) {
      return;
    }
    this.#closed = true;
    const res = await this.fetchImpl(`${this.base}/priors/${this.priorId}`, {
      method: "DELETE",
    });
    if (!res.ok) {
      await raiseFor(res);
    }
  }
}

/**
 * Validate the config against a running service and open a sequential batch
 * stream over it. `baseUrl` has no trailing slash, e.g. "http://127.0.0.1:8711".
 */
export async function openPrior(baseUrl: string, config: unknown,
                                options: OpenPriorOptions = {}): Promise<PriorHandle> {
  const fetchImpl = options.fetchImpl ?? fetch;
  return PriorHandle.open(baseUrl.replace(/\/$/, ""), config, fetchImpl);
}
