// Shared test plumbing: recorded API responses served through a fetch mock.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const here = dirname(fileURLToPath(import.meta.url));

export function fixture<T = unknown>(name: string): T {
  return JSON.parse(readFileSync(join(here, "fixtures", `${name}.json`), "utf8")) as T;
}

export interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

/** A fetch mock that replays recorded responses and logs every call. */
export function mockFetch(
  routes: Record<string, unknown | ((body: unknown) => unknown)>,
): { fetchFn: typeof fetch; calls: RecordedCall[] } {
  const calls: RecordedCall[] = [];
  const fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    calls.push({ url, method, body });
    const path = url.replace(/^https?:\/\/[^/]+/, "").split("?")[0];
    const handler = routes[path];
    if (handler === undefined) {
      return new Response(JSON.stringify({ detail: `no route ${path}` }), { status: 404 });
    }
    const data = typeof handler === "function"
      ? (handler as (b: unknown) => unknown)(body) : handler;
    if (data instanceof Response) return data;
    return new Response(JSON.stringify(data), {
      status: 200,
      headers: { "content-type": "application/json" },
    });
  }) as typeof fetch;
  return { fetchFn, calls };
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
