import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // the parity suite boots a real service process and streams batches
    // through it, so budgets are generous
    testTimeout: 120_000,
    hookTimeout: 120_000,
    fileParallelism: false,
  },
});
