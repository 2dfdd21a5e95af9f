import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    environment: "node",
    // The live suite spawns the real backend and waits for a full session.
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
