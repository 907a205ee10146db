import { describe, expect, it } from "vitest";

import { checkGridUri } from "../src/griduri.js";

describe("grid URI grammar", () => {
  it("accepts the three schemes", () => {
    expect(checkGridUri("file:///tmp/in.dat").ok).toBe(true);
    expect(checkGridUri("gsiftp://siteA:2811/data/out.ntup").ok).toBe(true);
    expect(checkGridUri("http://host/apps/bundle.tar").ok).toBe(true);
  });

  it("treats gridftp as an alias of gsiftp", () => {
    expect(checkGridUri("gridftp://h/p").ok).toBe(true);
  });

  it("rejects missing paths", () => {
    const result = checkGridUri("gsiftp://siteA");
    expect(result.ok).toBe(false);
    expect(result.error).toMatch(/path/);
  });

  it("rejects unknown schemes, bad hosts, and bad ports", () => {
    expect(checkGridUri("ftp://h/p").ok).toBe(false);
    expect(checkGridUri("file://host/p").ok).toBe(false);
    expect(checkGridUri("gsiftp:///p").ok).toBe(false);
    expect(checkGridUri("gsiftp://h:0/p").ok).toBe(false);
    expect(checkGridUri("gsiftp://h:99999/p").ok).toBe(false);
    expect(checkGridUri("gsiftp://h:abc/p").ok).toBe(false);
  });

  it("rejects userinfo, query, fragment, and whitespace", () => {
    expect(checkGridUri("gsiftp://user@h/p").ok).toBe(false);
    expect(checkGridUri("gsiftp://h/p?x=1").ok).toBe(false);
    expect(checkGridUri("gsiftp://h/p#frag").ok).toBe(false);
    expect(checkGridUri("file:///a b").ok).toBe(false);
    expect(checkGridUri("").ok).toBe(false);
  });
});
