// Minimal fetch over node:http for smoke tests. The dom test environment
// swaps in its own fetch; this adapter talks to the real map server directly
// and honors whatever AbortSignal implementation the caller hands it.

import http from "node:http";

import type { FetchLike } from "../../src/net";

export function nodeFetch(): FetchLike {
  return (url, init) =>
    new Promise((resolve, reject) => {
      const signal = init?.signal as AbortSignal | undefined;
      if (signal?.aborted) {
        reject(new DOMException("request aborted", "AbortError"));
        return;
      }
      const req = http.get(url, (res) => {
        const chunks: Buffer[] = [];
        res.on("data", (c: Buffer) => chunks.push(c));
        res.on("end", () => {
          const body = Buffer.concat(chunks);
          const status = res.statusCode ?? 0;
          resolve({
            ok: status >= 200 && status < 300,
            status,
            json: async () => JSON.parse(body.toString("utf8")),
            arrayBuffer: async () =>
              body.buffer.slice(body.byteOffset, body.byteOffset + body.byteLength),
          } as unknown as Response);
        });
        res.on("error", reject);
      });
      req.on("error", (err) => {
        if (signal?.aborted) reject(new DOMException("request aborted", "AbortError"));
        else reject(err);
      });
      signal?.addEventListener(
        "abort",
        () => {
          req.destroy(new Error("aborted"));
          reject(new DOMException("request aborted", "AbortError"));
        },
        { once: true },
      );
    });
}
