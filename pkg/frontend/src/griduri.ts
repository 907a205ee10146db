/** Client-side check of the grid URI grammar, so forms can flag bad
 * addresses before any request goes out. Matches the portal's rules:
 * scheme://host[:port]/path with schemes file/gsiftp/http (gridftp is an
 * alias of gsiftp), empty host only for file URIs, absolute path, no
 * userinfo/query/fragment. */

const SCHEMES = new Set(["file", "gsiftp", "http"]);
const ALIASES: Record<string, string> = { gridftp: "gsiftp" };
const HOST_RE = /^[a-z0-9]([a-z0-9.-]*[a-z0-9])?$/;

export interface UriCheck {
  ok: boolean;
  error?: string;
}

export function checkGridUri(text: string): UriCheck {
  const trimmed = text.trim();
  if (!trimmed) return { ok: false, error: "empty URI" };
  const match = /^([A-Za-z][A-Za-z0-9+.-]*):\/\/(.*)$/.exec(trimmed);
  if (!match) return { ok: false, error: "expected scheme://host/path" };
  let scheme = match[1].toLowerCase();
  scheme = ALIASES[scheme] ?? scheme;
  if (!SCHEMES.has(scheme)) return { ok: false, error: `unknown scheme "${scheme}"` };
  const rest = match[2];
  const slash = rest.indexOf("/");
  if (slash < 0) return { ok: false, error: "missing path (must be absolute)" };
  const authority = rest.slice(0, slash);
  const path = rest.slice(slash);
  if (/[@?#]/.test(authority) || /[@?#]/.test(path)) {
    return { ok: false, error: "userinfo/query/fragment not supported" };
  }
  if (/\s/.test(path)) return { ok: false, error: "whitespace in path" };
  let host = authority;
  if (authority.includes(":")) {
    const idx = authority.indexOf(":");
    host = authority.slice(0, idx);
    const port = Number(authority.slice(idx + 1));
    if (!Number.isInteger(port) || port < 1 || port > 65535) {
      return { ok: false, error: "invalid port" };
    }
  }
  host = host.toLowerCase();
  if (scheme === "file") {
    if (host) return { ok: false, error: "file URIs take no host" };
  } else if (!host) {
    return { ok: false, error: `${scheme} URIs need a host` };
  } else if (!HOST_RE.test(host)) {
    return { ok: false, error: `invalid host "${host}"` };
  }
  return { ok: true };
}
