import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { homedir } from "node:os";
import { dirname, join } from "node:path";

import { Credentials } from "./types.js";

export function defaultCredentialsPath(): string {
  const configHome =
    process.env.XDG_CONFIG_HOME ?? join(homedir(), ".config");
  return join(configHome, "forecast-arena", "credentials.json");
}

export function saveCredentials(
  credentials: Credentials,
  path: string = defaultCredentialsPath()
): string {
  mkdirSync(dirname(path), { recursive: true });
  writeFileSync(path, JSON.stringify(credentials, null, 2) + "\n", {
    mode: 0o600,
  });
  return path;
}

export function loadCredentials(
  path: string = defaultCredentialsPath()
): Credentials {
  const parsed = JSON.parse(readFileSync(path, "utf-8")) as Credentials;
  for (const field of ["baseUrl", "modelId", "apiKey"] as const) {
    if (typeof parsed[field] !== "string" || parsed[field] === "") {
      throw new Error(`credentials file ${path} is missing ${field}`);
    }
  }
  return parsed;
}
