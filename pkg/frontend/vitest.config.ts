import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // The e2e suite boots the Python service in a child process, which
    // needs generous headroom on a cold start.
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
