// Tile fetch queue: at most maxConcurrent requests in flight, FIFO start
// order, abortable both while queued and while in flight. The url log and
// counters exist so tests can assert exactly what went over the wire.

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

interface Waiter {
  start: () => void;
  abort: (reason: unknown) => void;
  signal?: AbortSignal;
}

export class FetchQueue {
  readonly urls: string[] = [];
  inFlight = 0;
  maxObservedInFlight = 0;
  aborted = 0;
  private waiting: Waiter[] = [];

  constructor(
    private fetchFn: FetchLike,
    readonly maxConcurrent = 8,
  ) {}

  get pending(): number {
    return this.inFlight + this.waiting.length;
  }

  async request(url: string, init?: { signal?: AbortSignal }): Promise<Response> {
    const signal = init?.signal;
    if (signal?.aborted) throw abortError();
    if (this.inFlight >= this.maxConcurrent) {
      await new Promise<void>((resolve, reject) => {
        const waiter: Waiter = { start: resolve, abort: reject, signal };
        signal?.addEventListener(
          "abort",
          () => {
            const i = this.waiting.indexOf(waiter);
            if (i >= 0) {
              this.waiting.splice(i, 1);
              this.aborted += 1;
              reject(abortError());
            }
          },
          { once: true },
        );
        this.waiting.push(waiter);
      });
    }
    this.inFlight += 1;
    this.maxObservedInFlight = Math.max(this.maxObservedInFlight, this.inFlight);
    this.urls.push(url);
    try {
      return await this.fetchFn(url, signal ? { signal } : undefined);
    } catch (err) {
      if (signal?.aborted) this.aborted += 1;
      throw err;
    } finally {
      this.inFlight -= 1;
      const next = this.waiting.shift();
      next?.start();
    }
  }
}

export function abortError(): Error {
  return new DOMException("request aborted", "AbortError");
}

export function isAbort(err: unknown): boolean {
  return err instanceof Error && err.name === "AbortError";
}

export function delay(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
