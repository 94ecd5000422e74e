import { describe, expect, it } from "vitest";

import { DEFAULT_STATE, decodeState, encodeState, ViewState } from "../src/state.js";

describe("URL state round-trip", () => {
  it("defaults encode to an empty hash and decode back", () => {
    expect(encodeState({ ...DEFAULT_STATE })).toBe("#");
    expect(decodeState("#")).toEqual({ ...DEFAULT_STATE });
    expect(decodeState("")).toEqual({ ...DEFAULT_STATE });
  });

  it("every view-state field survives the round trip", () => {
    const s: ViewState = {
      session: "fig2a",
      view: "timeline",
      kinds: ["read", "write"],
      comm: "fluent-bit",
      pathPrefix: "/var/log",
      sortField: "ret",
      sortDir: "desc",
      cursor: "NTAw",
      bucketSec: 2.5,
      namePrefix: "rocksdb:",
      topN: 5,
      detector: "contention",
      evidence: [1, 3, 11],
    };
    expect(decodeState(encodeState(s))).toEqual(s);
  });

  it("ignores junk values", () => {
    const s = decodeState("#view=bogus&bucket=-3&top=x&evidence=a,b");
    expect(s.view).toBe("table");
    expect(s.bucketSec).toBe(1);
    expect(s.topN).toBe(12);
    expect(s.evidence).toBeNull();
  });

  it("shareable link reproduces a diagnosis view", () => {
    const link = "#session=fig2a&kinds=read,write,unlink&sort=t_entry:asc";
    const s = decodeState(link);
    expect(s.session).toBe("fig2a");
    expect(s.kinds).toEqual(["read", "write", "unlink"]);
    expect(encodeState(s)).toBe("#session=fig2a&kinds=read%2Cwrite%2Cunlink");
  });
});
