/** Monitor-view controller: polling, selection, cancel, re-submit. All
 * mutations go through the API and are followed by a fresh GET, so the
 * screen always shows server state, never an optimistic guess. */

import type { PortalApi } from "./api.js";
import {
  MonitorState,
  emptyMonitorState,
  toggleSelection,
  withError,
  withRecords,
  withSummary,
} from "./state.js";

export class MonitorController {
  state: MonitorState;

  constructor(
    private readonly api: PortalApi,
    jobsetId: string,
  ) {
    this.state = emptyMonitorState(jobsetId);
  }

  /** One poll cycle: refresh job records and the dataset summary. */
  async tick(): Promise<void> {
    try {
      const records = await this.api.jobs(this.state.jobsetId);
      this.state = withRecords(this.state, records);
      this.state = withSummary(this.state, await this.api.summary(this.state.jobsetId));
    } catch (err) {
      this.state = withError(this.state, String(err));
    }
  }

  toggle(jobId: string): void {
    this.state = toggleSelection(this.state, jobId);
  }

  async cancelSelected(): Promise<void> {
    const ids = [...this.state.selected];
    if (ids.length === 0) return;
    try {
      await this.api.cancel(ids);
    } catch (err) {
      this.state = withError(this.state, String(err));
    }
    await this.tick(); // resulting states come from a fresh GET only
  }

  async resubmit(): Promise<string | null> {
    try {
      return await this.api.resubmit(this.state.jobsetId);
    } catch (err) {
      this.state = withError(this.state, String(err));
      return null;
    }
  }
}
